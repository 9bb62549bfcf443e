//! Synthetic desk-scale datasets: a 1-D `sin(3x)` regression target and a
//! procedural image corpus whose quality label is its Gaussian blur level.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{ColorSpace, Image};
use crate::data::{save_image, save_manifest, FeatureMatrix, Manifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{init_dual_head, DualBranchModel, ModelConfig};
use crate::trainer::{predict_rows, train_head, Task, TrainConfig, TrainReport};

/// `x ~ U[-1, 1]`, `y = sin(3x)`; one feature column.
pub fn sin_toy(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let y = x.iter().map(|v| (3.0 * v).sin()).collect();
    (FeatureMatrix::new(n, 1, x).expect("n x 1"), y)
}

/// Samples in the sin-target toy set.
pub const SIN_TOY_SAMPLES: usize = 256;

/// 100 epochs at `lr_max = 1e-2`: a one-edge head has too few parameters
/// for the backbone-scale `5e-5` to move it within the epoch budget.
pub fn sin_toy_train_config() -> TrainConfig {
    TrainConfig {
        lr_max: 1e-2,
        ..TrainConfig::default()
    }
}

/// Blur sigmas in pixels, level 0 (sharp) to 4.
pub const BLUR_SIGMAS: [f64; 5] = [0.0, 0.8, 1.6, 2.4, 3.2];

/// Separable Gaussian blur, kernel radius `ceil(3σ)`, mirrored borders.
/// `sigma == 0` returns the image unchanged.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("blur sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    let (w, h) = (img.width(), img.height());
    let mirror = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
        }
        i as usize
    };
    let src = img.data();
    let mut tmp = vec![0.0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                tmp[(y * w + x) * 3 + c] = k
                    .iter()
                    .enumerate()
                    .map(|(j, kv)| kv * src[(y * w + mirror(x as isize + j as isize - r, w)) * 3 + c] as f64)
                    .sum();
            }
        }
    }
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(j, kv)| kv * tmp[(mirror(y as isize + j as isize - r, h) * w + x) * 3 + c])
                    .sum();
                out[(y * w + x) * 3 + c] = v as f32;
            }
        }
    }
    Image::rgb(w, h, out)
}

/// Side length in pixels of one texture cell.
pub const TEXTURE_CELL: usize = 3;

/// A sharp random texture: `TEXTURE_CELL`-pixel blocks set to one of two
/// tinted gray levels (0.15 or 0.85), so edge content is dense and every
/// base has the same contrast.
pub fn procedural_image(size: usize, rng: &mut impl Rng) -> Result<Image> {
    let n = size.div_ceil(TEXTURE_CELL);
    let bits: Vec<bool> = (0..n * n).map(|_| rng.random_bool(0.5)).collect();
    let tint: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.8..1.0));
    Image::from_fn(size, size, |x, y| {
        let g = if bits[(y / TEXTURE_CELL) * n + x / TEXTURE_CELL] { 0.85 } else { 0.15 };
        tint.map(|t| g * t)
    })
}

#[derive(Clone, Debug)]
pub struct BlurCorpus {
    pub images: Vec<Image>,
    /// `5 - level`, so sharper images score higher.
    pub mos: Vec<f64>,
    pub base: Vec<usize>,
    pub level: Vec<usize>,
}

impl BlurCorpus {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Indices whose base image is (not) among the last `n_test` bases.
    pub fn split_by_base(&self, n_test: usize) -> (Vec<usize>, Vec<usize>) {
        let n_bases = self.base.iter().max().map_or(0, |b| b + 1);
        let cut = n_bases.saturating_sub(n_test);
        (0..self.len()).partition(|&i| self.base[i] < cut)
    }
}

/// `n_bases` procedural scenes, each at every level of [`BLUR_SIGMAS`],
/// ordered base-major.
pub fn blur_corpus(n_bases: usize, size: usize, seed: u64) -> Result<BlurCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = (0..n_bases)
        .map(|_| procedural_image(size, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..n_bases)
        .flat_map(|b| (0..BLUR_SIGMAS.len()).map(move |l| (b, l)))
        .collect();
    let images = jobs
        .par_iter()
        .map(|&(b, l)| gaussian_blur(&bases[b], BLUR_SIGMAS[l]))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlurCorpus {
        images,
        mos: jobs.iter().map(|&(_, l)| (BLUR_SIGMAS.len() - l) as f64).collect(),
        base: jobs.iter().map(|&(b, _)| b).collect(),
        level: jobs.iter().map(|&(_, l)| l).collect(),
    })
}

/// Writes every image as PPM plus `manifest.csv` (last `n_test` bases
/// marked `test`, the rest `train`) and returns the manifest.
pub fn write_blur_corpus(corpus: &BlurCorpus, dir: &Path, n_test: usize) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (_, test) = corpus.split_by_base(n_test);
    let mut entries = Vec::with_capacity(corpus.len());
    for i in 0..corpus.len() {
        let name = format!("base{:03}_blur{}.ppm", corpus.base[i], corpus.level[i]);
        save_image(&corpus.images[i], &dir.join(&name))?;
        entries.push(ManifestEntry {
            path: name.into(),
            mos: corpus.mos[i],
            split: if test.contains(&i) { Split::Test } else { Split::Train },
        });
    }
    let manifest = Manifest {
        source: "blur-toy".into(),
        mos_range: (0.0, BLUR_SIGMAS.len() as f64),
        entries,
    };
    save_manifest(&manifest, &dir.join("manifest.csv"))?;
    Ok(Manifest {
        entries: manifest
            .entries
            .into_iter()
            .map(|e| ManifestEntry {
                path: dir.join(e.path),
                ..e
            })
            .collect(),
        ..manifest
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_train: usize,
    pub n_test: usize,
    pub train: TrainReport,
    pub test: EvalReport,
    pub test_predictions: Vec<f64>,
}

/// Sizes and schedule of the end-to-end blur pipeline.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub n_bases: usize,
    pub n_test_bases: usize,
    pub image_size: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    /// 40 bases x 5 levels = 200 images, 8 held-out bases, 30 epochs.
    fn default() -> Self {
        Self {
            n_bases: 40,
            n_test_bases: 8,
            image_size: 64,
            seed: 0,
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
        }
    }
}

/// Generates the corpus, extracts joint embeddings with a seeded random
/// Tiny dual-branch model, trains only the head, and scores the held-out
/// bases. Returns the trained model alongside the report.
pub fn run_blur_pipeline(cfg: &PipelineConfig) -> Result<(DualBranchModel, PipelineReport)> {
    let corpus = blur_corpus(cfg.n_bases, cfg.image_size, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut model = DualBranchModel::random(ModelConfig::tiny(), &mut rng)?;
    let rows = corpus
        .images
        .par_iter()
        .map(|img| model.joint_embedding(img, ColorSpace::Rgb))
        .collect::<Result<Vec<_>>>()?;
    let features = FeatureMatrix::from_rows(&rows)?;
    let (train_idx, test_idx) = corpus.split_by_base(cfg.n_test_bases);
    let (f_train, f_test) = (features.select(&train_idx), features.select(&test_idx));
    let mos_train: Vec<f64> = train_idx.iter().map(|&i| corpus.mos[i]).collect();
    let mos_test: Vec<f64> = test_idx.iter().map(|&i| corpus.mos[i]).collect();

    let mut head = init_dual_head(model.config(), &mut rng)?;
    let train = train_head(&mut head, Task::rgb(&f_train, &mos_train), &cfg.train)?;
    let test_predictions = predict_rows(&head, &f_test)?;
    let test = evaluate(&test_predictions, &mos_test)?;
    model.set_head(head)?;
    Ok((
        model,
        PipelineReport {
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            train,
            test,
            test_predictions,
        },
    ))
}
