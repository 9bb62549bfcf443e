//! Color spaces used for multi-space scoring and the color-space robustness
//! loss.
//!
//! | space | standard | ranges |
//! |-------|----------|--------|
//! | RGB   | sRGB, nonlinear | `[0,1]` |
//! | YUV   | BT.601 full range | Y `[0,1]`, U `±0.436`, V `±0.615` |
//! | LAB   | CIELAB, sRGB primaries, D65 white `(0.95047, 1, 1.08883)` | L `[0,100]`, a/b `[-128,127]` |
//!
//! Before encoder normalization every space is mapped to `[0,1]` per channel
//! by [`to_network_range`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    Yuv,
    Lab,
}

impl ColorSpace {
    pub const ALL: [ColorSpace; 3] = [ColorSpace::Rgb, ColorSpace::Yuv, ColorSpace::Lab];

    pub fn name(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "rgb",
            ColorSpace::Yuv => "yuv",
            ColorSpace::Lab => "lab",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rgb" => Ok(ColorSpace::Rgb),
            "yuv" => Ok(ColorSpace::Yuv),
            "lab" => Ok(ColorSpace::Lab),
            other => Err(Error::InvalidArgument(format!("unknown color space `{other}`"))),
        }
    }
}

/// Interleaved 3-channel raster (`data[(y*width + x)*3 + c]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
    space: ColorSpace,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>, space: ColorSpace) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::shape("image", "buffer length", width * height * 3, data.len()));
        }
        if space == ColorSpace::Rgb && data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("RGB values must lie in [0, 1]".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "image" });
        }
        Ok(Self {
            width,
            height,
            data,
            space,
        })
    }

    pub fn rgb(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(width, height, data, ColorSpace::Rgb)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::rgb(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Same-space image with new geometry; skips the range check so
    /// converted spaces can be resampled.
    pub(crate) fn with_geometry(&self, width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        Self {
            width,
            height,
            data,
            space: self.space,
        }
    }

    fn map_pixels(&self, space: ColorSpace, f: impl Fn([f64; 3]) -> [f64; 3]) -> Image {
        let data = self
            .data
            .chunks_exact(3)
            .flat_map(|p| f([p[0] as f64, p[1] as f64, p[2] as f64]).map(|v| v as f32))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
            space,
        }
    }
}

fn expect_rgb(img: &Image) -> Result<()> {
    if img.space != ColorSpace::Rgb {
        return Err(Error::WrongColorSpace {
            expected: "rgb",
            actual: img.space.name(),
        });
    }
    Ok(())
}

/// BT.601 full-range RGB → YUV for one pixel. The U green weight is
/// −0.28887 rather than the commonly tabulated −0.28886 so that each
/// chroma row sums to zero and grays map to U = V = 0 exactly.
pub fn yuv_pixel([r, g, b]: [f64; 3]) -> [f64; 3] {
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.14713 * r - 0.28887 * g + 0.436 * b,
        0.615 * r - 0.51499 * g - 0.10001 * b,
    ]
}

pub fn rgb_to_yuv(img: &Image) -> Result<Image> {
    expect_rgb(img)?;
    Ok(img.map_pixels(ColorSpace::Yuv, yuv_pixel))
}

const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB → CIELAB (D65) for one pixel.
pub fn lab_pixel(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let fx = lab_f(x / D65_WHITE[0]);
    let fy = lab_f(y / D65_WHITE[1]);
    let fz = lab_f(z / D65_WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn rgb_to_lab(img: &Image) -> Result<Image> {
    expect_rgb(img)?;
    Ok(img.map_pixels(ColorSpace::Lab, lab_pixel))
}

pub fn convert(img: &Image, space: ColorSpace) -> Result<Image> {
    match space {
        ColorSpace::Rgb => {
            expect_rgb(img)?;
            Ok(img.clone())
        }
        ColorSpace::Yuv => rgb_to_yuv(img),
        ColorSpace::Lab => rgb_to_lab(img),
    }
}

fn network_range_pixel(space: ColorSpace, [a, b, c]: [f32; 3]) -> [f32; 3] {
    let v = match space {
        ColorSpace::Rgb => [a, b, c],
        ColorSpace::Yuv => [a, b / 0.436 * 0.5 + 0.5, c / 0.615 * 0.5 + 0.5],
        ColorSpace::Lab => [a / 100.0, (b + 128.0) / 255.0, (c + 128.0) / 255.0],
    };
    v.map(|x| x.clamp(0.0, 1.0))
}

/// Planar `[3, H, W]` tensor with every channel mapped into `[0, 1]`.
pub fn to_network_range(img: &Image) -> Tensor<f32> {
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0f32; 3 * w * h];
    for (i, p) in img.data.chunks_exact(3).enumerate() {
        let v = network_range_pixel(img.space, [p[0], p[1], p[2]]);
        for c in 0..3 {
            out[c * w * h + i] = v[c];
        }
    }
    Tensor::new(vec![3, h, w], out).expect("shape matches buffer")
}
