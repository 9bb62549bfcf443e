//! Dense row-major tensors and the forward-only neural primitives used by the
//! encoders (convolution, activations, pooling, folded batch norm).
//!
//! Every fallible operation checks its output for NaN/Inf and reports
//! [`Error::NonFinite`] instead of propagating non-finite values.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type stored in weights files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Floating-point scalar usable throughout the engine: `f32` for inference,
/// `f64` for gradient checking.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + MulAssign
    + 'static
{
    const DTYPE: DType;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape("tensor", "dimension must be positive", "> 0", &shape));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor", "element count", n, data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v * a).collect(),
        }
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    fn chw(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(op, "input rank", "[C, H, W]", &self.shape)),
        }
    }
}

/// Elementwise `a + b` for residual connections.
pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape != b.shape {
        return Err(Error::shape("add", "operand shapes", &a.shape, &b.shape));
    }
    let out = Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect(),
    };
    out.ensure_finite("add")?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Silu,
    HardSwish,
    HardSigmoid,
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

/// d/dx silu(x) = σ(x)·(1 + x·(1 − σ(x)))
#[inline]
pub fn silu_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

#[inline]
pub fn hard_sigmoid<T: Real>(x: T) -> T {
    (x / T::of(6.0) + T::of(0.5)).max(T::zero()).min(T::one())
}

#[inline]
pub fn hard_swish<T: Real>(x: T) -> T {
    x * hard_sigmoid(x)
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Silu => silu(x),
            Activation::HardSwish => hard_swish(x),
            Activation::HardSigmoid => hard_sigmoid(x),
        }
    }
}

pub fn activation<T: Real>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| kind.apply(v)).collect(),
    }
}

pub fn activation_inplace<T: Real>(x: &mut Tensor<T>, kind: Activation) {
    x.data.iter_mut().for_each(|v| *v = kind.apply(*v));
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dParams {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            padding: (0, 0),
            groups: 1,
        }
    }
}

pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Grouped 2-D cross-correlation of a `[C_in, H, W]` input with a
/// `[C_out, C_in/groups, K_h, K_w]` weight.
///
/// Output channels are computed in parallel; each channel's accumulation
/// order is fixed, so results do not depend on the thread count.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    p: Conv2dParams,
) -> Result<Tensor<T>> {
    const OP: &str = "conv2d";
    let (c_in, h, w) = input.chw(OP)?;
    let (c_out, cpg, kh, kw) = match weight.shape[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => return Err(Error::shape(OP, "weight rank", "[C_out, C_in/groups, K_h, K_w]", &weight.shape)),
    };
    let g = p.groups;
    if g == 0 || c_in % g != 0 {
        return Err(Error::shape(OP, "C_in divisible by groups", format!("multiple of {g}"), c_in));
    }
    if c_out % g != 0 {
        return Err(Error::shape(OP, "C_out divisible by groups", format!("multiple of {g}"), c_out));
    }
    if cpg != c_in / g {
        return Err(Error::shape(OP, "weight dim 1 (C_in/groups)", c_in / g, cpg));
    }
    let (sh, sw) = p.stride;
    let (ph, pw) = p.padding;
    if sh == 0 || sw == 0 {
        return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
    }
    if kh > h + 2 * ph {
        return Err(Error::shape(OP, "kernel height vs padded input height", format!("<= {}", h + 2 * ph), kh));
    }
    if kw > w + 2 * pw {
        return Err(Error::shape(OP, "kernel width vs padded input width", format!("<= {}", w + 2 * pw), kw));
    }
    if let Some(b) = bias {
        if b.shape != [c_out] {
            return Err(Error::shape(OP, "bias length", [c_out], &b.shape));
        }
    }

    let ho = conv_output_dim(h, kh, sh, ph);
    let wo = conv_output_dim(w, kw, sw, pw);
    let out_per_group = c_out / g;
    let x = &input.data;
    let wt = &weight.data;
    let mut out = vec![T::zero(); c_out * ho * wo];

    out.par_chunks_mut(ho * wo).enumerate().for_each(|(oc, plane)| {
        if let Some(b) = bias {
            plane.fill(b.data[oc]);
        }
        let group = oc / out_per_group;
        for icg in 0..cpg {
            let ic = group * cpg + icg;
            let xin = &x[ic * h * w..(ic + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wt[((oc * cpg + icg) * kh + ky) * kw + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for oy in 0..ho {
                        let iy = (oy * sh + ky) as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &xin[iy as usize * w..(iy as usize + 1) * w];
                        let orow = &mut plane[oy * wo..(oy + 1) * wo];
                        // valid ox range: 0 <= ox*sw + kx - pw < w
                        let ox_lo = if kx >= pw { 0 } else { (pw - kx).div_ceil(sw) };
                        let ox_hi = if w + pw > kx { ((w + pw - kx - 1) / sw + 1).min(wo) } else { 0 };
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        if sw == 1 {
                            let off = ox_lo + kx - pw;
                            let n = ox_hi - ox_lo;
                            for (o, &xv) in orow[ox_lo..ox_lo + n].iter_mut().zip(&row[off..off + n]) {
                                *o += wv * xv;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                orow[ox] += wv * row[ox * sw + kx - pw];
                            }
                        }
                    }
                }
            }
        }
    });

    let out = Tensor {
        shape: vec![c_out, ho, wo],
        data: out,
    };
    out.ensure_finite(OP)?;
    Ok(out)
}

pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw("global_avg_pool")?;
    let n = (h * w) as f64;
    let data = x
        .data
        .chunks(h * w)
        .take(c)
        .map(|plane| T::of(plane.iter().map(|v| v.as_f64()).sum::<f64>() / n))
        .collect();
    Ok(Tensor { shape: vec![c], data })
}

/// `y[c,h,w] = scale[c]·x[c,h,w] + shift[c]`; the inference form of batch norm.
pub fn affine_channel<T: Real>(x: &Tensor<T>, scale: &Tensor<T>, shift: &Tensor<T>) -> Result<Tensor<T>> {
    let mut y = x.clone();
    affine_channel_inplace(&mut y, scale, shift)?;
    Ok(y)
}

pub fn affine_channel_inplace<T: Real>(x: &mut Tensor<T>, scale: &Tensor<T>, shift: &Tensor<T>) -> Result<()> {
    const OP: &str = "affine_channel";
    let (c, h, w) = x.chw(OP)?;
    if scale.len() != c {
        return Err(Error::shape(OP, "scale length", c, scale.len()));
    }
    if shift.len() != c {
        return Err(Error::shape(OP, "shift length", c, shift.len()));
    }
    for (ch, plane) in x.data.chunks_mut(h * w).enumerate() {
        let (a, b) = (scale.data[ch], shift.data[ch]);
        plane.iter_mut().for_each(|v| *v = a * *v + b);
    }
    x.ensure_finite(OP)
}

/// Multiplies each channel plane by a per-channel gate (squeeze-excitation).
pub fn scale_channels<T: Real>(x: &mut Tensor<T>, gate: &Tensor<T>) -> Result<()> {
    let (c, h, w) = x.chw("scale_channels")?;
    if gate.len() != c {
        return Err(Error::shape("scale_channels", "gate length", c, gate.len()));
    }
    for (plane, &g) in x.data.chunks_mut(h * w).zip(&gate.data) {
        plane.iter_mut().for_each(|v| *v = *v * g);
    }
    Ok(())
}

/// Dense layer on a vector: `y = W·x + b` with `W` shaped `[out, in]`.
pub fn linear<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    const OP: &str = "linear";
    let (out_dim, in_dim) = match weight.shape[..] {
        [o, i] => (o, i),
        _ => return Err(Error::shape(OP, "weight rank", "[out, in]", &weight.shape)),
    };
    if x.len() != in_dim {
        return Err(Error::shape(OP, "input length", in_dim, x.len()));
    }
    if let Some(b) = bias {
        if b.len() != out_dim {
            return Err(Error::shape(OP, "bias length", out_dim, b.len()));
        }
    }
    let data: Vec<T> = weight
        .data
        .chunks(in_dim)
        .enumerate()
        .map(|(o, row)| {
            let acc: T = row.iter().zip(&x.data).map(|(&a, &b)| a * b).sum();
            acc + bias.map_or(T::zero(), |b| b.data[o])
        })
        .collect();
    let out = Tensor {
        shape: vec![out_dim],
        data,
    };
    out.ensure_finite(OP)?;
    Ok(out)
}

/// Folds inference-time batch norm into a per-channel `(scale, shift)` pair.
pub fn fold_batch_norm<T: Real>(gamma: &[T], beta: &[T], mean: &[T], var: &[T], eps: T) -> (Tensor<T>, Tensor<T>) {
    let scale: Vec<T> = gamma.iter().zip(var).map(|(&g, &v)| g / (v + eps).sqrt()).collect();
    let shift: Vec<T> = beta
        .iter()
        .zip(mean)
        .zip(&scale)
        .map(|((&b, &m), &s)| b - s * m)
        .collect();
    (Tensor::from_vec(scale), Tensor::from_vec(shift))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f32> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    // Direct six-loop summation, written independently of the kernel above.
    fn conv_oracle(
        x: &Tensor<f32>,
        wt: &Tensor<f32>,
        bias: Option<&Tensor<f32>>,
        stride: (usize, usize),
        pad: (usize, usize),
        groups: usize,
    ) -> Vec<f64> {
        let [c_in, h, w] = x.shape()[..] else { panic!() };
        let [c_out, cpg, kh, kw] = wt.shape()[..] else { panic!() };
        let ho = (h + 2 * pad.0 - kh) / stride.0 + 1;
        let wo = (w + 2 * pad.1 - kw) / stride.1 + 1;
        let opg = c_out / groups;
        let mut out = vec![0.0f64; c_out * ho * wo];
        for oc in 0..c_out {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias.map_or(0.0, |b| b.data()[oc] as f64);
                    for icg in 0..cpg {
                        let ic = (oc / opg) * cpg + icg;
                        assert!(ic < c_in);
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride.0 + ky) as i64 - pad.0 as i64;
                                let ix = (ox * stride.1 + kx) as i64 - pad.1 as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                    continue;
                                }
                                let xv = x.data()[(ic * h + iy as usize) * w + ix as usize] as f64;
                                let wv = wt.data()[((oc * cpg + icg) * kh + ky) * kw + kx] as f64;
                                acc += xv * wv;
                            }
                        }
                    }
                    out[(oc * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_scalar_weight() {
        let x = Tensor::full(&[1, 3, 3], 1.0f32);
        let wt = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let y = conv2d(&x, &wt, None, Conv2dParams::default()).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv_matches_oracle_3x3_pad1() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, &[3, 4, 4]);
        let wt = random(&mut rng, &[2, 3, 3, 3]);
        let p = Conv2dParams { stride: (1, 1), padding: (1, 1), groups: 1 };
        let y = conv2d(&x, &wt, None, p).unwrap();
        assert_eq!(y.shape(), &[2, 4, 4]);
        let want = conv_oracle(&x, &wt, None, (1, 1), (1, 1), 1);
        for (a, b) in y.data().iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn depthwise_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, &[4, 5, 6]);
        let mut k = vec![0.0f32; 4 * 9];
        for c in 0..4 {
            k[c * 9 + 4] = 1.0;
        }
        let wt = Tensor::new(vec![4, 1, 3, 3], k).unwrap();
        let p = Conv2dParams { stride: (1, 1), padding: (1, 1), groups: 4 };
        let y = conv2d(&x, &wt, None, p).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_shape_errors_name_dimension() {
        let x = Tensor::<f32>::zeros(&[3, 4, 4]);
        let wt = Tensor::<f32>::zeros(&[2, 2, 3, 3]);
        let err = conv2d(&x, &wt, None, Conv2dParams::default()).unwrap_err();
        assert!(err.to_string().contains("C_in/groups"), "{err}");
        let big = Tensor::<f32>::zeros(&[2, 3, 7, 7]);
        let err = conv2d(&x, &big, None, Conv2dParams::default()).unwrap_err();
        assert!(err.to_string().contains("kernel height"), "{err}");
        let p = Conv2dParams { groups: 2, ..Default::default() };
        assert!(conv2d(&x, &wt, None, p).is_err());
    }

    #[test]
    fn conv_random_configs_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..120 {
            let groups = [1, 1, 2, 3][rng.random_range(0..4)];
            let c_in = groups * rng.random_range(1..4);
            let c_out = groups * rng.random_range(1..4);
            let k = rng.random_range(1..6);
            let s = rng.random_range(1..4);
            let pad = rng.random_range(0..3);
            let h = rng.random_range(k.max(1)..12);
            let w = rng.random_range(k.max(1)..12);
            let x = random(&mut rng, &[c_in, h, w]);
            let wt = random(&mut rng, &[c_out, c_in / groups, k, k]);
            let b = random(&mut rng, &[c_out]);
            let p = Conv2dParams { stride: (s, s), padding: (pad, pad), groups };
            let y = conv2d(&x, &wt, Some(&b), p).unwrap();
            let want = conv_oracle(&x, &wt, Some(&b), (s, s), (pad, pad), groups);
            assert_eq!(y.len(), want.len());
            for (a, b) in y.data().iter().zip(&want) {
                let err = (*a as f64 - b).abs() / b.abs().max(1.0);
                assert!(err < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(silu(0.0f64), 0.0);
        assert_eq!(hard_swish(3.0f64), 3.0);
        assert_eq!(hard_swish(-3.0f64), 0.0);
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((silu(1.0f64) - s1).abs() < 1e-12);
        assert!((silu(1.0f64) - 0.731058).abs() < 1e-6);
        assert_eq!(hard_sigmoid(10.0f64), 1.0);
        assert_eq!(hard_sigmoid(0.0f64), 0.5);
    }

    #[test]
    fn activations_monotone_on_grid() {
        // relu and hard_sigmoid are nondecreasing everywhere; silu and
        // hard_swish only right of their minima (x ≈ -1.2785 and x = -1.5).
        let cases = [
            (Activation::Relu, -10.0),
            (Activation::HardSigmoid, -10.0),
            (Activation::Silu, -1.2784),
            (Activation::HardSwish, -1.5),
        ];
        for (kind, lo) in cases {
            let mut prev = f64::NEG_INFINITY;
            let mut x = lo;
            while x <= 10.0 {
                let y = kind.apply(x);
                assert!(y >= prev - 1e-15, "{kind:?} at {x}");
                prev = y;
                x += 1e-3;
            }
        }
        assert!(silu(-1.0f64) < silu(-2.0f64));
        assert!(hard_swish(-1.5f64) < hard_swish(-3.0f64));
    }

    #[test]
    fn global_pool() {
        let x = Tensor::full(&[2, 3, 3], 5.0f32);
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[5.0, 5.0]);
        let x = Tensor::new(vec![1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[2.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[3, 7, 7]);
        let y = global_avg_pool(&x).unwrap();
        for c in 0..3 {
            let mut s = 0.0f64;
            for i in 0..49 {
                s += x.data()[c * 49 + i] as f64;
            }
            assert!((y.data()[c] as f64 - s / 49.0).abs() < 1e-7);
        }
    }

    #[test]
    fn affine_identity_constant_and_bn_fold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&mut rng, &[3, 4, 5]);
        let one = Tensor::full(&[3], 1.0);
        let zero = Tensor::full(&[3], 0.0);
        assert_eq!(affine_channel(&x, &one, &zero).unwrap(), x);
        let seven = Tensor::full(&[3], 7.0);
        assert!(affine_channel(&x, &zero, &seven).unwrap().data().iter().all(|&v| v == 7.0));
        assert!(affine_channel(&x, &Tensor::full(&[2], 1.0), &zero).is_err());

        let gamma: Vec<f32> = (0..3).map(|_| rng.random_range(0.5..2.0)).collect();
        let beta: Vec<f32> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean: Vec<f32> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let var: Vec<f32> = (0..3).map(|_| rng.random_range(0.1..2.0)).collect();
        let eps = 1e-5f32;
        let (scale, shift) = fold_batch_norm(&gamma, &beta, &mean, &var, eps);
        let y = affine_channel(&x, &scale, &shift).unwrap();
        for c in 0..3 {
            for i in 0..20 {
                let v = x.data()[c * 20 + i];
                let bn = gamma[c] * (v - mean[c]) / (var[c] + eps).sqrt() + beta[c];
                assert!((y.data()[c * 20 + i] - bn).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn conv_is_linear_in_input(seed in any::<u64>(), a in -4.0f32..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&mut rng, &[2, 6, 6]);
            let wt = random(&mut rng, &[3, 2, 3, 3]);
            let p = Conv2dParams { stride: (1, 1), padding: (1, 1), groups: 1 };
            let lhs = conv2d(&x.scale(a), &wt, None, p).unwrap();
            let rhs = conv2d(&x, &wt, None, p).unwrap().scale(a);
            for (l, r) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((l - r).abs() < 1e-5);
            }
        }
    }
}
