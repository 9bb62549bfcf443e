//! Regression heads over frozen embeddings.
//!
//! [`Head`] is either a KAN or an MLP stack behind one interface;
//! [`DualHead`] is the two-branch head: a KAN down-sampler per branch
//! followed by a fusion head over `[authentic ‖ synthetic]`.
//! [`Regressor`] is what the trainer optimizes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::{KanCache, KanGrads, KanGrid, KanLayer, KanStack};
use crate::mlp::{Dense, DenseGrads, MlpActivation, MlpCache, MlpStack};
use crate::tensor::Real;
use crate::weights::WeightStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Kan,
    Mlp,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Kan => "kan",
            HeadKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kan" => Ok(HeadKind::Kan),
            "mlp" => Ok(HeadKind::Mlp),
            other => Err(Error::InvalidArgument(format!("unknown head kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Head<T: Real = f64> {
    Kan(KanStack<T>),
    Mlp(MlpStack<T>),
}

#[derive(Clone, Debug)]
pub enum HeadCache<T: Real> {
    Kan(Vec<KanCache<T>>),
    Mlp(MlpCache<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadGrads<T: Real> {
    Kan(Vec<KanGrads<T>>),
    Mlp(Vec<DenseGrads<T>>),
}

impl<T: Real> Head<T> {
    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Kan(_) => HeadKind::Kan,
            Head::Mlp(_) => HeadKind::Mlp,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Head::Kan(s) => s.in_dim(),
            Head::Mlp(s) => s.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Head::Kan(s) => s.out_dim(),
            Head::Mlp(s) => s.out_dim(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            Head::Kan(s) => s.dims(),
            Head::Mlp(s) => s.dims(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Head::Kan(s) => s.num_params(),
            Head::Mlp(s) => s.num_params(),
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, HeadCache<T>)> {
        Ok(match self {
            Head::Kan(s) => {
                let (y, c) = s.forward(x)?;
                (y, HeadCache::Kan(c))
            }
            Head::Mlp(s) => {
                let (y, c) = s.forward(x)?;
                (y, HeadCache::Mlp(c))
            }
        })
    }

    pub fn zero_grads(&self) -> HeadGrads<T> {
        match self {
            Head::Kan(s) => HeadGrads::Kan(s.zero_grads()),
            Head::Mlp(s) => HeadGrads::Mlp(s.zero_grads()),
        }
    }

    pub fn backward_accumulate(&self, grad_y: &[T], cache: &HeadCache<T>, grads: &mut HeadGrads<T>) -> Result<Vec<T>> {
        match (self, cache, grads) {
            (Head::Kan(s), HeadCache::Kan(c), HeadGrads::Kan(g)) => s.backward_accumulate(grad_y, c, g),
            (Head::Mlp(s), HeadCache::Mlp(c), HeadGrads::Mlp(g)) => s.backward_accumulate(grad_y, c, g),
            _ => Err(Error::StaleCache),
        }
    }

    /// Calls `f(param, grad)` for every parameter buffer in a fixed order.
    pub fn visit_params(&mut self, grads: &HeadGrads<T>, f: &mut dyn FnMut(&mut [T], &[T])) -> Result<()> {
        match (self, grads) {
            (Head::Kan(s), HeadGrads::Kan(gs)) => {
                for (layer, g) in s.layers_mut().iter_mut().zip(gs) {
                    let [bw, sc, bs] = layer.params_mut();
                    f(bw, &g.base_weight);
                    f(sc, &g.spline_coeff);
                    f(bs, &g.base_scale);
                }
                Ok(())
            }
            (Head::Mlp(s), HeadGrads::Mlp(gs)) => {
                for (layer, g) in s.layers_mut().iter_mut().zip(gs) {
                    f(&mut layer.weight, &g.weight);
                    f(&mut layer.bias, &g.bias);
                }
                Ok(())
            }
            _ => Err(Error::InvalidArgument("gradient kind does not match head kind".into())),
        }
    }

    /// Parameter buffers in [`Head::visit_params`] order.
    pub fn param_slices(&self) -> Vec<&[T]> {
        match self {
            Head::Kan(s) => s.layers().iter().flat_map(|l| l.params()).collect(),
            Head::Mlp(s) => s.layers().iter().flat_map(|l| [&l.weight[..], &l.bias[..]]).collect(),
        }
    }

    /// Layer `i` is stored as `{prefix}{i}.base_weight|spline_coeff|base_scale`
    /// (KAN) or `{prefix}{i}.weight|bias` (MLP).
    pub fn write_to(&self, store: &mut WeightStore, prefix: &str) -> Result<()> {
        match self {
            Head::Kan(s) => {
                for (i, l) in s.layers().iter().enumerate() {
                    let (o, n, nb) = (l.out_dim(), l.in_dim(), l.grid().num_bases());
                    store.insert_slice(format!("{prefix}{i}.base_weight"), vec![o, n], &l.base_weight)?;
                    store.insert_slice(format!("{prefix}{i}.spline_coeff"), vec![o, n, nb], &l.spline_coeff)?;
                    store.insert_slice(format!("{prefix}{i}.base_scale"), vec![o, n], &l.base_scale)?;
                }
            }
            Head::Mlp(s) => {
                for (i, l) in s.layers().iter().enumerate() {
                    store.insert_slice(format!("{prefix}{i}.weight"), vec![l.out_dim, l.in_dim], &l.weight)?;
                    store.insert_slice(format!("{prefix}{i}.bias"), vec![l.out_dim], &l.bias)?;
                }
            }
        }
        Ok(())
    }

    /// Reads consecutive layers `0, 1, ...` under `prefix`. MLP hidden layers
    /// get ReLU, the last layer none.
    pub fn read_from(store: &WeightStore, prefix: &str, kind: HeadKind, grid: KanGrid) -> Result<Self> {
        match kind {
            HeadKind::Kan => {
                let mut layers = Vec::new();
                while let Some(bw) = store.get(&format!("{prefix}{}.base_weight", layers.len())) {
                    let i = layers.len();
                    let [o, n] = bw.dims[..] else {
                        return Err(Error::TensorShape {
                            name: bw.name.clone(),
                            expected: vec![0, 0],
                            actual: bw.dims.clone(),
                        });
                    };
                    let nb = grid.num_bases();
                    layers.push(KanLayer::from_parts(
                        n,
                        o,
                        grid,
                        store.take(&format!("{prefix}{i}.base_weight"), &[o, n])?,
                        store.take(&format!("{prefix}{i}.spline_coeff"), &[o, n, nb])?,
                        store.take(&format!("{prefix}{i}.base_scale"), &[o, n])?,
                    )?);
                }
                if layers.is_empty() {
                    return Err(Error::MissingTensor(format!("{prefix}0.base_weight")));
                }
                Ok(Head::Kan(KanStack::new(layers)?))
            }
            HeadKind::Mlp => {
                let mut shapes = Vec::new();
                while let Some(w) = store.get(&format!("{prefix}{}.weight", shapes.len())) {
                    let [o, n] = w.dims[..] else {
                        return Err(Error::TensorShape {
                            name: w.name.clone(),
                            expected: vec![0, 0],
                            actual: w.dims.clone(),
                        });
                    };
                    shapes.push((o, n));
                }
                if shapes.is_empty() {
                    return Err(Error::MissingTensor(format!("{prefix}0.weight")));
                }
                let last = shapes.len() - 1;
                let layers = shapes
                    .iter()
                    .enumerate()
                    .map(|(i, &(o, n))| {
                        let act = if i == last { MlpActivation::None } else { MlpActivation::Relu };
                        Ok(Dense {
                            in_dim: n,
                            out_dim: o,
                            weight: store.take(&format!("{prefix}{i}.weight"), &[o, n])?,
                            bias: store.take(&format!("{prefix}{i}.bias"), &[o])?,
                            activation: act,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Head::Mlp(MlpStack::new(layers)?))
            }
        }
    }
}

/// Per-branch KAN down-samplers and a fusion head over their concatenation.
#[derive(Clone, Debug)]
pub struct DualHead<T: Real = f64> {
    pub down_auth: KanStack<T>,
    pub down_synth: KanStack<T>,
    pub fusion: Head<T>,
}

#[derive(Clone, Debug)]
pub struct DualCache<T: Real> {
    auth: Vec<KanCache<T>>,
    synth: Vec<KanCache<T>>,
    fusion: HeadCache<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualGrads<T: Real> {
    pub down_auth: Vec<KanGrads<T>>,
    pub down_synth: Vec<KanGrads<T>>,
    pub fusion: HeadGrads<T>,
}

impl<T: Real> DualHead<T> {
    pub fn new(down_auth: KanStack<T>, down_synth: KanStack<T>, fusion: Head<T>) -> Result<Self> {
        let joint = down_auth.out_dim() + down_synth.out_dim();
        if fusion.in_dim() != joint {
            return Err(Error::shape("dual_head", "fusion input dim", joint, fusion.in_dim()));
        }
        if fusion.out_dim() != 1 {
            return Err(Error::shape("dual_head", "fusion output dim", 1, fusion.out_dim()));
        }
        Ok(Self {
            down_auth,
            down_synth,
            fusion,
        })
    }

    pub fn auth_dim(&self) -> usize {
        self.down_auth.in_dim()
    }

    pub fn synth_dim(&self) -> usize {
        self.down_synth.in_dim()
    }

    pub fn num_params(&self) -> usize {
        self.down_auth.num_params() + self.down_synth.num_params() + self.fusion.num_params()
    }

    /// `x = [authentic embedding ‖ synthetic embedding]`.
    pub fn forward(&self, x: &[T]) -> Result<(T, DualCache<T>)> {
        let na = self.auth_dim();
        if x.len() != na + self.synth_dim() {
            return Err(Error::shape("dual_head", "input length", na + self.synth_dim(), x.len()));
        }
        let (a, auth) = self.down_auth.forward(&x[..na])?;
        let (s, synth) = self.down_synth.forward(&x[na..])?;
        let joint: Vec<T> = a.into_iter().chain(s).collect();
        let (y, fusion) = self.fusion.forward(&joint)?;
        Ok((y[0], DualCache { auth, synth, fusion }))
    }

    pub fn zero_grads(&self) -> DualGrads<T> {
        DualGrads {
            down_auth: self.down_auth.zero_grads(),
            down_synth: self.down_synth.zero_grads(),
            fusion: self.fusion.zero_grads(),
        }
    }

    pub fn backward_accumulate(&self, grad_y: T, cache: &DualCache<T>, grads: &mut DualGrads<T>) -> Result<Vec<T>> {
        let gj = self.fusion.backward_accumulate(&[grad_y], &cache.fusion, &mut grads.fusion)?;
        let (ga, gs) = gj.split_at(self.down_auth.out_dim());
        let mut gx = self.down_auth.backward_accumulate(ga, &cache.auth, &mut grads.down_auth)?;
        gx.extend(self.down_synth.backward_accumulate(gs, &cache.synth, &mut grads.down_synth)?);
        Ok(gx)
    }

    pub fn visit_params(&mut self, grads: &DualGrads<T>, f: &mut dyn FnMut(&mut [T], &[T])) -> Result<()> {
        for (stack, gs) in [(&mut self.down_auth, &grads.down_auth), (&mut self.down_synth, &grads.down_synth)] {
            for (layer, g) in stack.layers_mut().iter_mut().zip(gs) {
                let [bw, sc, bs] = layer.params_mut();
                f(bw, &g.base_weight);
                f(sc, &g.spline_coeff);
                f(bs, &g.base_scale);
            }
        }
        self.fusion.visit_params(&grads.fusion, f)
    }
}

/// A scalar-output model the trainer can fit.
pub trait Regressor {
    type Cache;
    type Grads;

    fn in_dim(&self) -> usize;
    fn predict_one(&self, x: &[f64]) -> Result<(f64, Self::Cache)>;
    fn zero_grads(&self) -> Self::Grads;
    fn backward_one(&self, grad_y: f64, cache: &Self::Cache, grads: &mut Self::Grads) -> Result<()>;
    fn visit_params(&mut self, grads: &Self::Grads, f: &mut dyn FnMut(&mut [f64], &[f64])) -> Result<()>;
}

impl Regressor for Head<f64> {
    type Cache = HeadCache<f64>;
    type Grads = HeadGrads<f64>;

    fn in_dim(&self) -> usize {
        Head::in_dim(self)
    }

    fn predict_one(&self, x: &[f64]) -> Result<(f64, Self::Cache)> {
        if self.out_dim() != 1 {
            return Err(Error::shape("regressor", "head output dim", 1, self.out_dim()));
        }
        let (y, c) = self.forward(x)?;
        Ok((y[0], c))
    }

    fn zero_grads(&self) -> Self::Grads {
        Head::zero_grads(self)
    }

    fn backward_one(&self, grad_y: f64, cache: &Self::Cache, grads: &mut Self::Grads) -> Result<()> {
        self.backward_accumulate(&[grad_y], cache, grads).map(drop)
    }

    fn visit_params(&mut self, grads: &Self::Grads, f: &mut dyn FnMut(&mut [f64], &[f64])) -> Result<()> {
        Head::visit_params(self, grads, f)
    }
}

impl Regressor for DualHead<f64> {
    type Cache = DualCache<f64>;
    type Grads = DualGrads<f64>;

    fn in_dim(&self) -> usize {
        self.auth_dim() + self.synth_dim()
    }

    fn predict_one(&self, x: &[f64]) -> Result<(f64, Self::Cache)> {
        self.forward(x)
    }

    fn zero_grads(&self) -> Self::Grads {
        DualHead::zero_grads(self)
    }

    fn backward_one(&self, grad_y: f64, cache: &Self::Cache, grads: &mut Self::Grads) -> Result<()> {
        self.backward_accumulate(grad_y, cache, grads).map(drop)
    }

    fn visit_params(&mut self, grads: &Self::Grads, f: &mut dyn FnMut(&mut [f64], &[f64])) -> Result<()> {
        DualHead::visit_params(self, grads, f)
    }
}
