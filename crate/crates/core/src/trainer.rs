//! Head-only training on frozen features: AdamW with decoupled weight decay,
//! linear warmup then cosine annealing, round-robin multi-task batching, and
//! k-fold / holdout splitting.
//!
//! Training is single-threaded and fully determined by the seed.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::ColorSpace;
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::head::Regressor;
use crate::kv::{self, config_err};
use crate::losses::{acc_loss, mse, LossConfig, PlccLossForm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_max: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub loss: LossConfig,
    /// Min-max scale MOS to `[0, 1]` before training.
    pub normalize_mos: bool,
}

impl Default for TrainConfig {
    /// Robustness spaces default to RGB only: a plain feature matrix carries
    /// one color space. Add `yuv,lab` when features for them are supplied.
    fn default() -> Self {
        Self {
            epochs: 100,
            lr_max: 5e-5,
            weight_decay: 1e-4,
            batch_size: 16,
            warmup_fraction: 0.05,
            seed: 0,
            loss: LossConfig {
                color_spaces: vec![ColorSpace::Rgb],
                ..LossConfig::default()
            },
            normalize_mos: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr_max must be > 0, got {}", self.lr_max)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument("weight_decay must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidArgument(format!(
                "warmup_fraction must be in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch_size must be >= 2".into()));
        }
        self.loss.validate()
    }

    pub fn from_text(text: &str, file: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for e in kv::parse(text, file)? {
            match e.key.as_str() {
                "epochs" => cfg.epochs = e.parse(file)?,
                "lr_max" | "lr" => cfg.lr_max = e.parse(file)?,
                "weight_decay" => cfg.weight_decay = e.parse(file)?,
                "batch_size" => cfg.batch_size = e.parse(file)?,
                "warmup_fraction" => cfg.warmup_fraction = e.parse(file)?,
                "seed" => cfg.seed = e.parse(file)?,
                "alpha" => cfg.loss.alpha = e.parse(file)?,
                "beta" => cfg.loss.beta = e.parse(file)?,
                "lambda_rob" => cfg.loss.lambda_rob = e.parse(file)?,
                "color_spaces" => cfg.loss.color_spaces = e.list(file)?,
                "plcc_form" => {
                    cfg.loss.plcc_form = match e.value.as_str() {
                        "one-minus-r" => PlccLossForm::OneMinusR,
                        "half-one-minus-r" => PlccLossForm::HalfOneMinusR,
                        v => return Err(config_err(file, e.line, format!("unknown plcc_form `{v}`"))),
                    }
                }
                "normalize_mos" => cfg.normalize_mos = e.parse(file)?,
                _ => return Err(e.unknown(file)),
            }
        }
        cfg.validate().map_err(|e| config_err(file, 0, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    fn warmup_steps(&self, total_steps: usize) -> usize {
        (self.warmup_fraction * total_steps as f64).ceil() as usize
    }
}

/// Linear `0 → lr_max` over the warmup steps, then
/// `lr_max · ½(1 + cos(π · progress))` reaching 0 at the final step.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    let warm = cfg.warmup_steps(total_steps);
    if step < warm {
        return cfg.lr_max * step as f64 / warm as f64;
    }
    let span = total_steps.saturating_sub(1 + warm).max(1);
    let progress = ((step - warm) as f64 / span as f64).min(1.0);
    cfg.lr_max * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Per-buffer first and second moments plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// One AdamW update of a single buffer, `t` being the 1-based step:
/// `p ← p − lr·(m̂/(√v̂ + ε) + wd·p)`.
pub fn adamw_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, t: u64, hp: &AdamWParams) {
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..p.len() {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        p[i] -= lr * (mh / (vh.sqrt() + hp.eps) + hp.weight_decay * p[i]);
    }
}

/// Applies one AdamW step to every parameter buffer of `model`. A
/// non-finite gradient aborts before any parameter changes.
pub fn adamw_step<R: Regressor>(
    model: &mut R,
    grads: &R::Grads,
    state: &mut AdamWState,
    lr: f64,
    hp: &AdamWParams,
) -> Result<()> {
    let next = state.step + 1;
    let mut finite = true;
    model.visit_params(grads, &mut |_, g| finite &= g.iter().all(|x| x.is_finite()))?;
    if !finite {
        return Err(Error::NonFiniteGradient { step: next });
    }
    state.step = next;
    let mut k = 0;
    let AdamWState { m, v, .. } = state;
    model.visit_params(grads, &mut |p, g| {
        if m.len() <= k {
            m.push(vec![0.0; p.len()]);
            v.push(vec![0.0; p.len()]);
        }
        adamw_update(p, g, &mut m[k], &mut v[k], lr, next, hp);
        k += 1;
    })?;
    Ok(())
}

/// Features for one color space; all views share row order.
#[derive(Clone, Copy, Debug)]
pub struct View<'a> {
    pub space: ColorSpace,
    pub features: &'a FeatureMatrix,
}

/// One dataset: its features (per color space) and MOS.
#[derive(Clone, Debug)]
pub struct Task<'a> {
    pub views: Vec<View<'a>>,
    pub mos: &'a [f64],
}

impl<'a> Task<'a> {
    pub fn rgb(features: &'a FeatureMatrix, mos: &'a [f64]) -> Self {
        Self {
            views: vec![View {
                space: ColorSpace::Rgb,
                features,
            }],
            mos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
    /// `(min, max)` used to scale MOS when `normalize_mos` is set.
    pub mos_scale: Option<(f64, f64)>,
}

/// Maps MOS to the trained scale (identity unless `normalize_mos` was set).
pub fn scale_mos(mos: &[f64], scale: Option<(f64, f64)>) -> Vec<f64> {
    match scale {
        Some((lo, hi)) if hi > lo => mos.iter().map(|m| (m - lo) / (hi - lo)).collect(),
        _ => mos.to_vec(),
    }
}

struct Run<'a, 'm, R: Regressor> {
    model: &'m mut R,
    primary: usize,
    /// `(view index, weight)` of robustness terms.
    robust: Vec<usize>,
    task: Task<'a>,
    targets: Vec<f64>,
    cfg: &'a TrainConfig,
    rng: ChaCha8Rng,
    opt: AdamWState,
    hp: AdamWParams,
    order: Vec<usize>,
    batch: usize,
    steps_per_epoch: usize,
    total_steps: usize,
    step: usize,
    epoch_loss: f64,
    report: TrainReport,
}

impl<'a, 'm, R: Regressor> Run<'a, 'm, R> {
    fn new(model: &'m mut R, task: Task<'a>, cfg: &'a TrainConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = task.mos.len();
        if n < cfg.batch_size {
            return Err(Error::InvalidArgument(format!(
                "need at least batch_size={} samples, got {n}",
                cfg.batch_size
            )));
        }
        for v in &task.views {
            if v.features.rows() != n {
                return Err(Error::shape("train", format!("{} feature rows", v.space), n, v.features.rows()));
            }
            if v.features.cols() != model.in_dim() {
                return Err(Error::shape("train", format!("{} feature cols", v.space), model.in_dim(), v.features.cols()));
            }
        }
        let find = |s: ColorSpace| task.views.iter().position(|v| v.space == s);
        let primary = find(ColorSpace::Rgb).ok_or_else(|| Error::InvalidArgument("training needs RGB features".into()))?;
        let mut robust = Vec::new();
        if cfg.loss.lambda_rob > 0.0 {
            for &s in &cfg.loss.color_spaces {
                robust.push(find(s).ok_or_else(|| {
                    Error::InvalidArgument(format!("robustness loss needs {s} features, none supplied"))
                })?);
            }
        }
        let mos_scale = cfg.normalize_mos.then(|| {
            let lo = task.mos.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = task.mos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        });
        if cfg.loss.beta > 0.0 && task.mos.iter().all(|&m| m == task.mos[0]) {
            return Err(Error::DegenerateCorrelation("constant MOS with a correlation loss term"));
        }
        let targets = scale_mos(task.mos, mos_scale);
        let steps_per_epoch = n / cfg.batch_size;
        Ok(Self {
            model,
            primary,
            robust,
            task,
            targets,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            opt: AdamWState::default(),
            hp: AdamWParams {
                weight_decay: cfg.weight_decay,
                ..AdamWParams::default()
            },
            order: (0..n).collect(),
            batch: 0,
            steps_per_epoch,
            total_steps: steps_per_epoch * cfg.epochs,
            step: 0,
            epoch_loss: 0.0,
            report: TrainReport {
                loss_curve: Vec::with_capacity(cfg.epochs),
                steps: 0,
                mos_scale,
            },
        })
    }

    fn done(&self) -> bool {
        self.step >= self.total_steps
    }

    /// One optimizer step on the next batch.
    fn advance(&mut self) -> Result<()> {
        if self.batch == 0 {
            self.order.shuffle(&mut self.rng);
        }
        let b = self.cfg.batch_size;
        let idx = &self.order[self.batch * b..(self.batch + 1) * b];
        let target: Vec<f64> = idx.iter().map(|&i| self.targets[i]).collect();

        // Views used this step, each evaluated once.
        let mut used: Vec<usize> = vec![self.primary];
        for &r in &self.robust {
            if !used.contains(&r) {
                used.push(r);
            }
        }
        let mut preds = Vec::with_capacity(used.len());
        let mut caches = Vec::with_capacity(used.len());
        for &vi in &used {
            let f = self.task.views[vi].features;
            let mut p = Vec::with_capacity(b);
            let mut c = Vec::with_capacity(b);
            for &i in idx {
                let (y, cache) = self.model.predict_one(f.row(i))?;
                p.push(y);
                c.push(cache);
            }
            preds.push(p);
            caches.push(c);
        }

        // A batch with one repeated MOS (or constant predictions) has no
        // defined correlation; such a batch trains on the MSE term alone.
        let (mut loss, g_acc) = match acc_loss(&preds[0], &target, &self.cfg.loss) {
            Err(Error::DegenerateCorrelation(_)) => {
                let mse_only = LossConfig {
                    beta: 0.0,
                    ..self.cfg.loss.clone()
                };
                acc_loss(&preds[0], &target, &mse_only)?
            }
            r => r?,
        };
        let mut grads_by_view: Vec<Vec<f64>> = preds.iter().map(|p| vec![0.0; p.len()]).collect();
        grads_by_view[0] = g_acc;
        let lambda = self.cfg.loss.lambda_rob;
        for &r in &self.robust {
            let slot = used.iter().position(|&u| u == r).expect("view evaluated");
            let (v, g) = mse(&preds[slot], &target)?;
            loss += lambda * v;
            for (acc, gi) in grads_by_view[slot].iter_mut().zip(g) {
                *acc += lambda * gi;
            }
        }

        let mut grads = self.model.zero_grads();
        for (slot, cs) in caches.iter().enumerate() {
            for (cache, &g) in cs.iter().zip(&grads_by_view[slot]) {
                self.model.backward_one(g, cache, &mut grads)?;
            }
        }
        let lr = lr_at(self.step, self.total_steps, self.cfg);
        adamw_step(self.model, &grads, &mut self.opt, lr, &self.hp)?;

        self.step += 1;
        self.epoch_loss += loss;
        self.batch += 1;
        if self.batch == self.steps_per_epoch {
            self.report.loss_curve.push(self.epoch_loss / self.steps_per_epoch as f64);
            self.epoch_loss = 0.0;
            self.batch = 0;
        }
        self.report.steps = self.step;
        Ok(())
    }
}

/// Fits `model` to one dataset; deterministic for a given `cfg.seed`.
pub fn train_head<R: Regressor>(model: &mut R, task: Task<'_>, cfg: &TrainConfig) -> Result<TrainReport> {
    let mut reports = multi_task_train(std::slice::from_mut(model), vec![task], cfg)?;
    Ok(reports.remove(0))
}

/// Trains one head per dataset, interleaving their batches round-robin.
/// Dataset `i` shuffles with seed `cfg.seed + i` and has its own optimizer
/// state and learning-rate schedule.
pub fn multi_task_train<R: Regressor>(models: &mut [R], tasks: Vec<Task<'_>>, cfg: &TrainConfig) -> Result<Vec<TrainReport>> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("multi-task training needs at least one dataset".into()));
    }
    if tasks.len() != models.len() {
        return Err(Error::shape("multi_task_train", "heads vs datasets", tasks.len(), models.len()));
    }
    let mut runs = models
        .iter_mut()
        .zip(tasks)
        .enumerate()
        .map(|(i, (m, t))| Run::new(m, t, cfg, cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    while runs.iter().any(|r| !r.done()) {
        for r in runs.iter_mut().filter(|r| !r.done()) {
            r.advance()?;
        }
    }
    Ok(runs.into_iter().map(|r| r.report).collect())
}

pub fn predict_rows<R: Regressor>(model: &R, features: &FeatureMatrix) -> Result<Vec<f64>> {
    (0..features.rows())
        .map(|i| model.predict_one(features.row(i)).map(|(y, _)| y))
        .collect()
}

/// `epoch,loss` for one curve, or `epoch,<name>...` for several.
pub fn loss_curves_csv(names: &[&str], curves: &[&[f64]]) -> String {
    let mut s = String::from("epoch");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    let len = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    for e in 0..len {
        let _ = write!(s, "{}", e + 1);
        for c in curves {
            match c.get(e) {
                Some(v) => {
                    let _ = write!(s, ",{v}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Every index not in fold `i`, ascending.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        v.sort_unstable();
        v
    }
}

/// Seeded shuffle of `0..n`, cut into `k` contiguous folds whose sizes
/// differ by at most one (the larger folds first).
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("k-fold needs 1 <= k <= n, got n={n} k={k}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldPlan { k, seed, folds })
}

/// Seeded random holdout: `(train, held_out)` with
/// `round(fraction · n)` held out, both ascending.
pub fn holdout(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) || n == 0 {
        return Err(Error::InvalidArgument(format!("holdout needs n > 0 and fraction in [0, 1), got {fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let m = (fraction * n as f64).round() as usize;
    let mut held = idx[..m].to_vec();
    let mut train = idx[m..].to_vec();
    held.sort_unstable();
    train.sort_unstable();
    Ok((train, held))
}
