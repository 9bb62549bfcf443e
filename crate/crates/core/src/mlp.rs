//! Baseline MLP regression heads.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Real;

/// Width of the extra hidden layer that brings an MLP head's FLOPs in line
/// with the default `1000→128→1` KAN head.
pub const MATCHED_HIDDEN: usize = 1125;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlpActivation {
    Relu,
    None,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, PartialEq)]
pub struct Dense<T: Real = f32> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out × in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub activation: MlpActivation,
}

impl<T: Real> Clone for Dense<T> {
    fn clone(&self) -> Self {
        Self {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weight: self.weight.clone(),
            bias: self.bias.clone(),
            activation: self.activation,
        }
    }
}

impl<T: Real> Dense<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: MlpActivation) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
            activation,
        }
    }

    /// Kaiming-uniform weights (bound `1/√in`), zero bias.
    pub fn init(in_dim: usize, out_dim: usize, activation: MlpActivation, rng: &mut impl Rng) -> Self {
        let mut d = Self::zeros(in_dim, out_dim, activation);
        let bound = 1.0 / (in_dim as f64).sqrt();
        let uni = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        d.weight.iter_mut().for_each(|w| *w = T::of(uni.sample(rng)));
        d
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Clone, Debug)]
pub struct MlpCache<T: Real> {
    stack_id: u64,
    version: u64,
    /// Input to each layer.
    inputs: Vec<Vec<T>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads<T: Real> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, PartialEq)]
pub struct MlpStack<T: Real = f32> {
    layers: Vec<Dense<T>>,
    id: u64,
    version: u64,
}

impl<T: Real> Clone for MlpStack<T> {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }
}

impl<T: Real> MlpStack<T> {
    pub fn new(layers: Vec<Dense<T>>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidArgument("MLP stack needs at least one layer".into()));
        };
        if last.activation != MlpActivation::None {
            return Err(Error::InvalidArgument("final MLP layer must have no activation".into()));
        }
        for (n, l) in layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(Error::InvalidArgument(format!("MLP layer {n} has a zero dimension")));
            }
            if l.weight.len() != l.in_dim * l.out_dim {
                return Err(Error::shape("mlp", format!("layer {n} weight length"), l.in_dim * l.out_dim, l.weight.len()));
            }
            if l.bias.len() != l.out_dim {
                return Err(Error::shape("mlp", format!("layer {n} bias length"), l.out_dim, l.bias.len()));
            }
        }
        for (n, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::shape(
                    "mlp",
                    format!("layer {n} out_dim vs layer {} in_dim", n + 1),
                    pair[0].out_dim,
                    pair[1].in_dim,
                ));
            }
        }
        Ok(Self {
            layers,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        })
    }

    /// ReLU between layers, linear output.
    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("MLP dims need at least input and output".into()));
        }
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let act = if i + 1 == n { MlpActivation::None } else { MlpActivation::Relu };
                Dense::init(d[0], d[1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        self.version += 1;
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn zero_grads(&self) -> Vec<DenseGrads<T>> {
        self.layers
            .iter()
            .map(|l| DenseGrads {
                weight: vec![T::zero(); l.weight.len()],
                bias: vec![T::zero(); l.bias.len()],
            })
            .collect()
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
        if x.len() != self.in_dim() {
            return Err(Error::shape("mlp_forward", "input length", self.in_dim(), x.len()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for l in &self.layers {
            let z: Vec<T> = l
                .weight
                .chunks(l.in_dim)
                .zip(&l.bias)
                .map(|(row, &b)| row.iter().zip(&h).map(|(&w, &v)| w * v).sum::<T>() + b)
                .collect();
            let a = match l.activation {
                MlpActivation::Relu => z.iter().map(|&v| v.max(T::zero())).collect(),
                MlpActivation::None => z.clone(),
            };
            inputs.push(std::mem::replace(&mut h, a));
            pre.push(z);
        }
        let cache = MlpCache {
            stack_id: self.id,
            version: self.version,
            inputs,
            pre,
        };
        Ok((h, cache))
    }

    pub fn backward_accumulate(
        &self,
        grad_y: &[T],
        cache: &MlpCache<T>,
        grads: &mut [DenseGrads<T>],
    ) -> Result<Vec<T>> {
        if cache.stack_id != self.id || cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        if grad_y.len() != self.out_dim() {
            return Err(Error::shape("mlp_backward", "grad_y length", self.out_dim(), grad_y.len()));
        }
        let mut g = grad_y.to_vec();
        for (n, l) in self.layers.iter().enumerate().rev() {
            if l.activation == MlpActivation::Relu {
                for (gv, &z) in g.iter_mut().zip(&cache.pre[n]) {
                    if z <= T::zero() {
                        *gv = T::zero();
                    }
                }
            }
            let x = &cache.inputs[n];
            let gr = &mut grads[n];
            let mut gx = vec![T::zero(); l.in_dim];
            for (o, &go) in g.iter().enumerate() {
                if go == T::zero() {
                    continue;
                }
                gr.bias[o] += go;
                let row = &l.weight[o * l.in_dim..(o + 1) * l.in_dim];
                let grow = &mut gr.weight[o * l.in_dim..(o + 1) * l.in_dim];
                for i in 0..l.in_dim {
                    grow[i] += go * x[i];
                    gx[i] += go * row[i];
                }
            }
            g = gx;
        }
        Ok(g)
    }

    pub fn backward(&self, grad_y: &[T], cache: &MlpCache<T>) -> Result<(Vec<T>, Vec<DenseGrads<T>>)> {
        let mut grads = self.zero_grads();
        let gx = self.backward_accumulate(grad_y, cache, &mut grads)?;
        Ok((gx, grads))
    }
}

/// `[in_dim → 1125 relu, 1125 → 128 relu, 128 → 1]`.
pub fn build_matched_mlp<T: Real>(in_dim: usize, rng: &mut impl Rng) -> Result<MlpStack<T>> {
    MlpStack::init(&[in_dim, MATCHED_HIDDEN, 128, 1], rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer() {
        let mut d = Dense::<f64>::zeros(3, 3, MlpActivation::None);
        for i in 0..3 {
            d.weight[i * 3 + i] = 1.0;
        }
        let s = MlpStack::new(vec![d]).unwrap();
        let (y, _) = s.forward(&[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(y, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn relu_zeroes_negatives() {
        let mut d = Dense::<f64>::zeros(2, 2, MlpActivation::Relu);
        d.weight = vec![1.0, 0.0, 0.0, 1.0];
        let out = Dense::<f64> {
            weight: vec![1.0, 0.0, 0.0, 1.0],
            ..Dense::zeros(2, 2, MlpActivation::None)
        };
        let s = MlpStack::new(vec![d, out]).unwrap();
        let (y, _) = s.forward(&[-1.0, -3.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_naive_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = MlpStack::<f64>::init(&[1000, 128, 1], &mut rng).unwrap();
        let x: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let (y, _) = s.forward(&x).unwrap();
        let l0 = &s.layers()[0];
        let l1 = &s.layers()[1];
        let mut h = vec![0.0; 128];
        for o in 0..128 {
            let mut acc = l0.bias[o];
            for i in 0..1000 {
                acc += l0.weight[o * 1000 + i] * x[i];
            }
            h[o] = if acc > 0.0 { acc } else { 0.0 };
        }
        let mut out = l1.bias[0];
        for i in 0..128 {
            out += l1.weight[i] * h[i];
        }
        assert!((y[0] - out).abs() < 1e-10);
    }

    #[test]
    fn single_layer_weight_grad_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = MlpStack::<f64>::init(&[3, 2], &mut rng).unwrap();
        let x = [0.5, -1.0, 2.0];
        let gy = [1.5, -0.5];
        let (_, c) = s.forward(&x).unwrap();
        let (_, g) = s.backward(&gy, &c).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(g[0].weight[o * 3 + i], gy[o] * x[i]);
            }
            assert_eq!(g[0].bias[o], gy[o]);
        }
        let (gx, g) = s.backward(&[0.0, 0.0], &c).unwrap();
        assert!(gx.iter().chain(&g[0].weight).chain(&g[0].bias).all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = MlpStack::<f64>::init(&[2, 2, 1], &mut rng).unwrap();
        let (_, c) = s.forward(&[1.0, 2.0]).unwrap();
        let other = s.clone();
        assert!(matches!(other.backward(&[1.0], &c), Err(Error::StaleCache)));
        s.layers_mut()[0].bias[0] = 1.0;
        assert!(matches!(s.backward(&[1.0], &c), Err(Error::StaleCache)));
    }

    #[test]
    fn matched_mlp_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = build_matched_mlp::<f32>(1000, &mut rng).unwrap();
        assert_eq!(s.dims(), vec![1000, 1125, 128, 1]);
        assert_eq!(s.num_params(), 1000 * 1125 + 1125 + 1125 * 128 + 128 + 128 + 1);
        assert_eq!(s.num_params(), 1_270_382);
        assert!(s.layers()[2].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn linear_stack_commutes_with_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layers = vec![
            Dense::<f64>::init(5, 4, MlpActivation::None, &mut rng),
            Dense::<f64>::init(4, 2, MlpActivation::None, &mut rng),
        ];
        let s = MlpStack::new(layers).unwrap();
        let x = [0.3, -0.2, 0.9, 1.1, -0.7];
        let a = -2.75;
        let (y1, _) = s.forward(&x.map(|v| a * v)).unwrap();
        let (y0, _) = s.forward(&x).unwrap();
        for (p, q) in y1.iter().zip(&y0) {
            assert!((p - a * q).abs() < 1e-9);
        }
    }

    #[test]
    fn final_activation_must_be_none() {
        let d = Dense::<f32>::zeros(2, 1, MlpActivation::Relu);
        assert!(MlpStack::new(vec![d]).is_err());
    }
}
