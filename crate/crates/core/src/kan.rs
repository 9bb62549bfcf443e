//! Kolmogorov-Arnold layers.
//!
//! Every edge `(j, i)` carries a learnable univariate function
//!
//! ```text
//! φ_ji(x) = base_scale[j,i]·base_weight[j,i]·silu(x) + Σ_g spline_coeff[j,i,g]·B_g(x)
//! ```
//!
//! and output `j` sums its incoming edges. `B_g` are order-`k` B-splines on a
//! uniform knot vector that extends `[grid_min, grid_max]` by `k` knots on
//! each side (`G + 2k + 1` knots, `G + k` bases). The grid is fixed: inputs
//! outside the extended knot range evaluate all bases to zero and only the
//! silu path remains.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{silu, silu_grad, Real};

/// Fixed uniform B-spline grid shared by every edge of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KanGrid {
    pub size: usize,
    pub order: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for KanGrid {
    fn default() -> Self {
        Self {
            size: 5,
            order: 3,
            min: -1.0,
            max: 1.0,
        }
    }
}

impl KanGrid {
    pub fn new(size: usize, order: usize, min: f64, max: f64) -> Result<Self> {
        let g = Self { size, order, min, max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 1 || self.order < 1 {
            return Err(Error::InvalidArgument(format!(
                "KAN grid needs size >= 1 and order >= 1, got size={} order={}",
                self.size, self.order
            )));
        }
        if !(self.min < self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "KAN grid range must satisfy min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    /// Number of basis functions (`G + k`).
    pub fn num_bases(&self) -> usize {
        self.size + self.order
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / self.size as f64
    }

    /// The `G + 2k + 1` knots `t_j = min + (j − k)·h`.
    pub fn knots(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.size + 2 * self.order + 1)
            .map(|j| self.min + (j as f64 - self.order as f64) * h)
            .collect()
    }

    /// Cox–de Boor evaluation of all `G + k` bases at `x`.
    pub fn basis<T: Real>(&self, x: T) -> Vec<T> {
        let knots: Vec<T> = self.knots().into_iter().map(T::of).collect();
        let mut b = vec![T::zero(); knots.len() - 1];
        let mut d = vec![T::zero(); self.num_bases()];
        self.eval_into(&knots, x, &mut b, &mut d, false);
        b.truncate(self.num_bases());
        b
    }

    /// Bases and their derivatives `dB_g/dx` at `x`.
    pub fn basis_and_derivative<T: Real>(&self, x: T) -> (Vec<T>, Vec<T>) {
        let knots: Vec<T> = self.knots().into_iter().map(T::of).collect();
        let mut b = vec![T::zero(); knots.len() - 1];
        let mut d = vec![T::zero(); self.num_bases()];
        self.eval_into(&knots, x, &mut b, &mut d, true);
        b.truncate(self.num_bases());
        (b, d)
    }

    /// `work` has `knots.len() - 1` slots; on return its first `G + k` entries
    /// hold the order-k bases. When `want_deriv`, `deriv` receives
    /// `dB_{j,k}/dx = k/(t_{j+k}−t_j)·B_{j,k−1} − k/(t_{j+k+1}−t_{j+1})·B_{j+1,k−1}`.
    fn eval_into<T: Real>(&self, knots: &[T], x: T, work: &mut [T], deriv: &mut [T], want_deriv: bool) {
        let k = self.order;
        let n0 = knots.len() - 1;
        for j in 0..n0 {
            work[j] = if x >= knots[j] && x < knots[j + 1] { T::one() } else { T::zero() };
        }
        for p in 1..=k {
            if p == k && want_deriv {
                let kk = T::of(k as f64);
                for j in 0..self.num_bases() {
                    let left = kk / (knots[j + k] - knots[j]) * work[j];
                    let right = kk / (knots[j + k + 1] - knots[j + 1]) * work[j + 1];
                    deriv[j] = left - right;
                }
            }
            for j in 0..n0 - p {
                let left = (x - knots[j]) / (knots[j + p] - knots[j]) * work[j];
                let right = (knots[j + p + 1] - x) / (knots[j + p + 1] - knots[j + 1]) * work[j + 1];
                work[j] = left + right;
            }
        }
    }
}

static NEXT_LAYER_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_LAYER_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, PartialEq)]
pub struct KanLayer<T: Real = f32> {
    in_dim: usize,
    out_dim: usize,
    grid: KanGrid,
    /// `[out_dim × in_dim]`
    pub base_weight: Vec<T>,
    /// `[out_dim × in_dim × (G + k)]`
    pub spline_coeff: Vec<T>,
    /// `[out_dim × in_dim]`
    pub base_scale: Vec<T>,
    id: u64,
    version: u64,
}

impl<T: Real> Clone for KanLayer<T> {
    fn clone(&self) -> Self {
        Self {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            grid: self.grid,
            base_weight: self.base_weight.clone(),
            spline_coeff: self.spline_coeff.clone(),
            base_scale: self.base_scale.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

/// Forward-pass state needed by [`KanLayer::backward`].
#[derive(Clone, Debug)]
pub struct KanCache<T: Real> {
    layer_id: u64,
    version: u64,
    input: Vec<T>,
    silu: Vec<T>,
    silu_grad: Vec<T>,
    /// `[in_dim × (G + k)]`
    basis: Vec<T>,
    dbasis: Vec<T>,
    /// Nonzero basis window `[lo, hi)` per input.
    window: Vec<(usize, usize)>,
}

impl<T: Real> KanCache<T> {
    pub fn basis(&self) -> &[T] {
        &self.basis
    }

    pub fn input(&self) -> &[T] {
        &self.input
    }
}

/// Gradients of a single layer, laid out like its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct KanGrads<T: Real> {
    pub base_weight: Vec<T>,
    pub spline_coeff: Vec<T>,
    pub base_scale: Vec<T>,
}

impl<T: Real> KanLayer<T> {
    /// All parameters zero except `base_scale = 1`.
    pub fn zeros(in_dim: usize, out_dim: usize, grid: KanGrid) -> Result<Self> {
        grid.validate()?;
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument("KAN layer dimensions must be positive".into()));
        }
        let edges = in_dim * out_dim;
        Ok(Self {
            in_dim,
            out_dim,
            grid,
            base_weight: vec![T::zero(); edges],
            spline_coeff: vec![T::zero(); edges * grid.num_bases()],
            base_scale: vec![T::one(); edges],
            id: fresh_id(),
            version: 0,
        })
    }

    /// `base_scale = 1`, Kaiming-uniform `base_weight` (bound `1/√in_dim`),
    /// spline coefficients ~ N(0, (0.1/(G+k))²).
    pub fn init(in_dim: usize, out_dim: usize, grid: KanGrid, rng: &mut impl Rng) -> Result<Self> {
        let mut layer = Self::zeros(in_dim, out_dim, grid)?;
        let bound = 1.0 / (in_dim as f64).sqrt();
        let uni = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        layer.base_weight.iter_mut().for_each(|w| *w = T::of(uni.sample(rng)));
        let noise = Normal::new(0.0, 0.1 / grid.num_bases() as f64).expect("positive sigma");
        layer.spline_coeff.iter_mut().for_each(|c| *c = T::of(noise.sample(rng)));
        Ok(layer)
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        grid: KanGrid,
        base_weight: Vec<T>,
        spline_coeff: Vec<T>,
        base_scale: Vec<T>,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_dim, out_dim, grid)?;
        let edges = in_dim * out_dim;
        if base_weight.len() != edges {
            return Err(Error::shape("kan", "base_weight length", edges, base_weight.len()));
        }
        if base_scale.len() != edges {
            return Err(Error::shape("kan", "base_scale length", edges, base_scale.len()));
        }
        if spline_coeff.len() != edges * grid.num_bases() {
            return Err(Error::shape("kan", "spline_coeff length", edges * grid.num_bases(), spline_coeff.len()));
        }
        layer.base_weight = base_weight;
        layer.spline_coeff = spline_coeff;
        layer.base_scale = base_scale;
        Ok(layer)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn grid(&self) -> KanGrid {
        self.grid
    }

    pub fn num_params(&self) -> usize {
        self.base_weight.len() + self.spline_coeff.len() + self.base_scale.len()
    }

    /// Parameter buffers in serialization order.
    pub fn params(&self) -> [&[T]; 3] {
        [&self.base_weight, &self.spline_coeff, &self.base_scale]
    }

    /// Mutable parameter buffers; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> [&mut Vec<T>; 3] {
        self.version += 1;
        [&mut self.base_weight, &mut self.spline_coeff, &mut self.base_scale]
    }

    pub fn zero_grads(&self) -> KanGrads<T> {
        KanGrads {
            base_weight: vec![T::zero(); self.base_weight.len()],
            spline_coeff: vec![T::zero(); self.spline_coeff.len()],
            base_scale: vec![T::zero(); self.base_scale.len()],
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, KanCache<T>)> {
        if x.len() != self.in_dim {
            return Err(Error::shape("kan_forward", "input length", self.in_dim, x.len()));
        }
        let nb = self.grid.num_bases();
        let knots: Vec<T> = self.grid.knots().into_iter().map(T::of).collect();
        let mut work = vec![T::zero(); knots.len() - 1];
        let mut basis = vec![T::zero(); self.in_dim * nb];
        let mut dbasis = vec![T::zero(); self.in_dim * nb];
        let mut window = Vec::with_capacity(self.in_dim);
        for (i, &xi) in x.iter().enumerate() {
            self.grid
                .eval_into(&knots, xi, &mut work, &mut dbasis[i * nb..(i + 1) * nb], true);
            basis[i * nb..(i + 1) * nb].copy_from_slice(&work[..nb]);
            let row = &basis[i * nb..(i + 1) * nb];
            let drow = &dbasis[i * nb..(i + 1) * nb];
            let nz = |g: &usize| row[*g] != T::zero() || drow[*g] != T::zero();
            let lo = (0..nb).find(nz).unwrap_or(0);
            let hi = (0..nb).rev().find(nz).map_or(lo, |g| g + 1);
            window.push((lo, hi));
        }
        let s: Vec<T> = x.iter().map(|&v| silu(v)).collect();
        let ds: Vec<T> = x.iter().map(|&v| silu_grad(v)).collect();

        let mut y = vec![T::zero(); self.out_dim];
        for (j, yj) in y.iter_mut().enumerate() {
            let edge0 = j * self.in_dim;
            let mut acc = T::zero();
            for i in 0..self.in_dim {
                let e = edge0 + i;
                acc += self.base_scale[e] * self.base_weight[e] * s[i];
                let (lo, hi) = window[i];
                let coeff = &self.spline_coeff[e * nb..(e + 1) * nb];
                let b = &basis[i * nb..(i + 1) * nb];
                for g in lo..hi {
                    acc += coeff[g] * b[g];
                }
            }
            *yj = acc;
        }
        let cache = KanCache {
            layer_id: self.id,
            version: self.version,
            input: x.to_vec(),
            silu: s,
            silu_grad: ds,
            basis,
            dbasis,
            window,
        };
        Ok((y, cache))
    }

    fn check_cache(&self, grad_y: &[T], cache: &KanCache<T>) -> Result<()> {
        if cache.layer_id != self.id || cache.version != self.version || cache.input.len() != self.in_dim {
            return Err(Error::StaleCache);
        }
        if grad_y.len() != self.out_dim {
            return Err(Error::shape("kan_backward", "grad_y length", self.out_dim, grad_y.len()));
        }
        Ok(())
    }

    /// Adds this sample's parameter gradients into `grads`; returns `dL/dx`.
    pub fn backward_accumulate(&self, grad_y: &[T], cache: &KanCache<T>, grads: &mut KanGrads<T>) -> Result<Vec<T>> {
        self.check_cache(grad_y, cache)?;
        let nb = self.grid.num_bases();
        let mut grad_x = vec![T::zero(); self.in_dim];
        for (j, &gy) in grad_y.iter().enumerate() {
            if gy == T::zero() {
                continue;
            }
            let edge0 = j * self.in_dim;
            for i in 0..self.in_dim {
                let e = edge0 + i;
                let (bs, bw) = (self.base_scale[e], self.base_weight[e]);
                grads.base_weight[e] += gy * bs * cache.silu[i];
                grads.base_scale[e] += gy * bw * cache.silu[i];
                let (lo, hi) = cache.window[i];
                let coeff = &self.spline_coeff[e * nb..(e + 1) * nb];
                let gc = &mut grads.spline_coeff[e * nb..(e + 1) * nb];
                let b = &cache.basis[i * nb..(i + 1) * nb];
                let db = &cache.dbasis[i * nb..(i + 1) * nb];
                let mut dphi = bs * bw * cache.silu_grad[i];
                for g in lo..hi {
                    gc[g] += gy * b[g];
                    dphi += coeff[g] * db[g];
                }
                grad_x[i] += gy * dphi;
            }
        }
        Ok(grad_x)
    }

    pub fn backward(&self, grad_y: &[T], cache: &KanCache<T>) -> Result<(Vec<T>, KanGrads<T>)> {
        let mut grads = self.zero_grads();
        let gx = self.backward_accumulate(grad_y, cache, &mut grads)?;
        Ok((gx, grads))
    }
}

/// Evaluates the layer's `G + k` bases at `x`.
pub fn bspline_basis<T: Real>(x: T, layer: &KanLayer<T>) -> Vec<T> {
    layer.grid.basis(x)
}

/// Chain of KAN layers.
#[derive(Clone, Debug, PartialEq)]
pub struct KanStack<T: Real = f32> {
    layers: Vec<KanLayer<T>>,
}

impl<T: Real> KanStack<T> {
    pub fn new(layers: Vec<KanLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("KAN stack needs at least one layer".into()));
        }
        for (n, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::shape(
                    "kan_stack",
                    format!("layer {n} out_dim vs layer {} in_dim", n + 1),
                    pair[0].out_dim,
                    pair[1].in_dim,
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialized stack for `dims = [d0, d1, ..., dn]`.
    pub fn init(dims: &[usize], grid: KanGrid, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("KAN stack dims need at least input and output".into()));
        }
        let layers = dims
            .windows(2)
            .map(|d| KanLayer::init(d[0], d[1], grid, rng))
            .collect::<Result<_>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[KanLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [KanLayer<T>] {
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
        self.layers.iter().map(KanLayer::num_params).sum()
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, Vec<KanCache<T>>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (y, c) = layer.forward(&h)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    pub fn zero_grads(&self) -> Vec<KanGrads<T>> {
        self.layers.iter().map(KanLayer::zero_grads).collect()
    }

    pub fn backward_accumulate(
        &self,
        grad_y: &[T],
        caches: &[KanCache<T>],
        grads: &mut [KanGrads<T>],
    ) -> Result<Vec<T>> {
        if caches.len() != self.layers.len() || grads.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let mut g = grad_y.to_vec();
        for ((layer, cache), grad) in self.layers.iter().zip(caches).zip(grads.iter_mut()).rev() {
            g = layer.backward_accumulate(&g, cache, grad)?;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Textbook recursive Cox–de Boor, independent of the iterative version.
    fn cox_de_boor(t: &[f64], j: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            return if t[j] <= x && x < t[j + 1] { 1.0 } else { 0.0 };
        }
        let a = (x - t[j]) / (t[j + p] - t[j]) * cox_de_boor(t, j, p - 1, x);
        let b = (t[j + p + 1] - x) / (t[j + p + 1] - t[j + 1]) * cox_de_boor(t, j + 1, p - 1, x);
        a + b
    }

    #[test]
    fn knot_vector_layout() {
        let g = KanGrid::default();
        let t = g.knots();
        assert_eq!(t.len(), 5 + 2 * 3 + 1);
        assert!((t[3] + 1.0).abs() < 1e-15 && (t[8] - 1.0).abs() < 1e-15);
        assert!((t[1] - t[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn partition_of_unity_at_center() {
        let g = KanGrid::default();
        let s: f64 = g.basis(0.0f64).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_hats_on_knots() {
        let g = KanGrid::new(4, 1, -1.0, 1.0).unwrap();
        for &x in &g.knots()[1..5] {
            let b = g.basis(x);
            assert_eq!(b.iter().filter(|&&v| v == 1.0).count(), 1, "x={x} {b:?}");
            assert_eq!(b.iter().filter(|&&v| v != 0.0).count(), 1);
        }
    }

    #[test]
    fn matches_recursive_oracle() {
        let g = KanGrid::default();
        let t = g.knots();
        for &x in &[0.3, -0.97, 0.0, 0.999, -1.0, 1.3, -1.9] {
            let b = g.basis(x);
            for (j, &v) in b.iter().enumerate() {
                assert!((v - cox_de_boor(&t, j, 3, x)).abs() < 1e-14, "x={x} j={j}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let g = KanGrid::new(6, 3, -2.0, 1.0).unwrap();
        for &x in &[0.123f64, -1.55, 0.71] {
            let (_, d) = g.basis_and_derivative(x);
            let h = 1e-6;
            let (bp, bm) = (g.basis(x + h), g.basis(x - h));
            for j in 0..g.num_bases() {
                let fd = (bp[j] - bm[j]) / (2.0 * h);
                assert!((d[j] - fd).abs() < 1e-6, "j={j} {} {fd}", d[j]);
            }
        }
    }

    #[test]
    fn outside_extended_grid_is_silu_only() {
        let g = KanGrid::default();
        assert!(g.basis(5.0f64).iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = KanLayer::<f64>::init(1, 1, g, &mut rng).unwrap();
        let (y, _) = layer.forward(&[5.0]).unwrap();
        assert!((y[0] - layer.base_weight[0] * silu(5.0)).abs() < 1e-12);
    }

    #[test]
    fn spline_off_identity_gives_silu() {
        let mut layer = KanLayer::<f64>::zeros(3, 3, KanGrid::default()).unwrap();
        for j in 0..3 {
            layer.base_weight[j * 3 + j] = 1.0;
        }
        let x = [0.5, -0.25, 2.0];
        let (y, _) = layer.forward(&x).unwrap();
        for j in 0..3 {
            assert!((y[j] - silu(x[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weights_zero_output() {
        let mut layer = KanLayer::<f64>::zeros(4, 2, KanGrid::default()).unwrap();
        layer.base_scale.fill(0.0);
        let (y, _) = layer.forward(&[0.1, 0.2, -0.3, 0.9]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_naive_edge_loop() {
        let g = KanGrid::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = KanLayer::<f64>::init(4, 3, g, &mut rng).unwrap();
        let x = [0.3, -0.8, 1.4, -0.05];
        let (y, _) = layer.forward(&x).unwrap();
        let t = g.knots();
        for j in 0..3 {
            let mut acc = 0.0;
            for i in 0..4 {
                let e = j * 4 + i;
                let sig = 1.0 / (1.0 + (-x[i]).exp());
                acc += layer.base_scale[e] * layer.base_weight[e] * x[i] * sig;
                for gi in 0..g.num_bases() {
                    acc += layer.spline_coeff[e * 8 + gi] * cox_de_boor(&t, gi, 3, x[i]);
                }
            }
            assert!((y[j] - acc).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = KanLayer::<f64>::init(3, 2, KanGrid::default(), &mut rng).unwrap();
        let (_, c) = layer.forward(&[0.1, 0.5, -0.7]).unwrap();
        let (gx, g) = layer.backward(&[0.0, 0.0], &c).unwrap();
        assert!(gx.iter().all(|&v| v == 0.0));
        assert!(g.base_weight.iter().chain(&g.spline_coeff).chain(&g.base_scale).all(|&v| v == 0.0));
    }

    #[test]
    fn single_edge_chain_rule() {
        let mut layer = KanLayer::<f64>::zeros(1, 1, KanGrid::default()).unwrap();
        layer.base_weight[0] = 1.0;
        let x = 0.37;
        let (_, c) = layer.forward(&[x]).unwrap();
        let (gx, _) = layer.backward(&[2.5], &c).unwrap();
        assert!((gx[0] - 2.5 * silu_grad(x)).abs() < 1e-15);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut layer = KanLayer::<f64>::init(2, 2, KanGrid::default(), &mut rng).unwrap();
        let other = layer.clone();
        let (_, c) = layer.forward(&[0.1, 0.2]).unwrap();
        assert!(matches!(other.backward(&[1.0, 1.0], &c), Err(Error::StaleCache)));
        layer.params_mut()[0][0] += 1.0;
        assert!(matches!(layer.backward(&[1.0, 1.0], &c), Err(Error::StaleCache)));
        assert!(layer.forward(&[0.1]).is_err());
    }

    #[test]
    fn stack_chain_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = KanLayer::<f32>::init(4, 3, KanGrid::default(), &mut rng).unwrap();
        let b = KanLayer::<f32>::init(2, 1, KanGrid::default(), &mut rng).unwrap();
        assert!(KanStack::new(vec![a, b]).is_err());
        let s = KanStack::<f32>::init(&[10, 4, 1], KanGrid::default(), &mut rng).unwrap();
        assert_eq!(s.dims(), vec![10, 4, 1]);
        assert_eq!(s.num_params(), 10 * 4 * 10 + 4 * 10);
    }
}
