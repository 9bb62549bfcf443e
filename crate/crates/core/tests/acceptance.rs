//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nriqa::color::{lab_pixel, yuv_pixel, ColorSpace, Image};
use nriqa::complexity::{
    count_layer, count_model, Counting, LayerDesc, MAC_BUDGET, REFERENCE_PARAMS, UHD_FRAME,
};
use nriqa::encoder::{Encoder, EncoderKind, EncoderSpec, EMBEDDING_DIM};
use nriqa::head::{Head, HeadGrads};
use nriqa::kan::{KanGrid, KanLayer, KanStack};
use nriqa::losses::{acc_loss, color_space_loss, LossConfig, PlccLossForm};
use nriqa::metrics::{krcc, plcc, srcc};
use nriqa::mlp::MlpStack;
use nriqa::model::{DualBranchModel, ModelConfig};
use nriqa::tensor::Tensor;
use nriqa::toy::{run_blur_pipeline, sin_toy, sin_toy_train_config, PipelineConfig, SIN_TOY_SAMPLES};
use nriqa::trainer::{predict_rows, train_head, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Check = (u32, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn main() -> ExitCode {
    let checks: [Check; 10] = [
        (1, "B-spline partition of unity and local support", bspline_basis),
        (2, "analytic gradients match central differences", gradients),
        (3, "KAN head fits sin(3x), linear head cannot", sin_toy_fit),
        (4, "correlation metrics match brute-force oracles", metric_oracles),
        (5, "color conversions", color_conversions),
        (6, "complexity accounting", complexity),
        (7, "dual-branch architecture", architecture),
        (8, "loss contracts", loss_contracts),
        (9, "blur pipeline ranks held-out images", blur_pipeline),
        (10, "scoring and training are reproducible", reproducibility),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in checks {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into())),
        };
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{detail}] {secs:.1}s"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{why}] {secs:.1}s");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn bspline_basis() -> Outcome {
    let mut worst = 0.0f64;
    for (g, k) in [(5, 3), (3, 1), (8, 2)] {
        let grid = ok(KanGrid::new(g, k, -1.0, 1.0))?;
        for i in 0..1000 {
            let x = -1.0 + 2.0 * i as f64 / 999.0;
            let b = grid.basis::<f64>(x);
            ensure!(b.len() == g + k, "G={g} k={k}: {} bases, expected {}", b.len(), g + k);
            ensure!(b.iter().all(|v| *v >= 0.0), "G={g} k={k}: negative basis at x={x}");
            let active = b.iter().filter(|v| **v != 0.0).count();
            ensure!(active <= k + 1, "G={g} k={k}: {active} nonzero bases at x={x}");
            worst = worst.max((b.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure!(worst < 1e-9, "max |sum - 1| = {worst:e}");
    Ok(format!("max |sum - 1| = {worst:.1e} over 3000 points"))
}

const FD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;

/// Relative error with a floor so that two near-zero values compare by
/// absolute difference.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn objective(head: &Head<f64>, x: &[f64], w: &[f64]) -> f64 {
    let (y, _) = head.forward(x).expect("forward");
    y.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Reads (and with `set`, overwrites) parameter `idx` of slot `slot`.
fn param(head: &mut Head<f64>, grads: &HeadGrads<f64>, slot: usize, idx: usize, set: Option<f64>) -> f64 {
    let (mut k, mut old) = (0, 0.0);
    head.visit_params(grads, &mut |p, _| {
        if k == slot {
            old = p[idx];
            if let Some(v) = set {
                p[idx] = v;
            }
        }
        k += 1;
    })
    .expect("visit");
    old
}

fn jitter(head: &mut Head<f64>, r: &mut ChaCha8Rng) {
    let noise = Normal::new(0.0, 0.1).unwrap();
    let g = head.zero_grads();
    head.visit_params(&g, &mut |p, _| p.iter_mut().for_each(|v| *v += noise.sample(r)))
        .expect("visit");
}

/// Max relative error over sampled parameter and input coordinates of
/// `L = w · head(x)`.
fn head_grad_check(head: &mut Head<f64>, r: &mut ChaCha8Rng) -> f64 {
    let x: Vec<f64> = (0..head.in_dim()).map(|_| r.random_range(-1.1..1.1)).collect();
    let w: Vec<f64> = (0..head.out_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
    let (_, cache) = head.forward(&x).expect("forward");
    let mut grads = head.zero_grads();
    let gx = head.backward_accumulate(&w, &cache, &mut grads).expect("backward");
    let mut slots: Vec<Vec<f64>> = Vec::new();
    let zero = head.zero_grads();
    head.visit_params(&grads, &mut |_, g| slots.push(g.to_vec())).expect("visit");

    let mut worst = 0.0f64;
    for (s, g) in slots.iter().enumerate() {
        let active: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
        let mut picks: Vec<usize> = (0..3).map(|_| r.random_range(0..g.len())).collect();
        if !active.is_empty() {
            picks.extend((0..5).map(|_| active[r.random_range(0..active.len())]));
        }
        for i in picks {
            let orig = param(head, &zero, s, i, None);
            param(head, &zero, s, i, Some(orig + FD_STEP));
            let up = objective(head, &x, &w);
            param(head, &zero, s, i, Some(orig - FD_STEP));
            let down = objective(head, &x, &w);
            param(head, &zero, s, i, Some(orig));
            worst = worst.max(rel_err(g[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    for _ in 0..6 {
        let i = r.random_range(0..x.len());
        let mut xp = x.clone();
        xp[i] += FD_STEP;
        let up = objective(head, &xp, &w);
        xp[i] = x[i] - FD_STEP;
        let down = objective(head, &xp, &w);
        worst = worst.max(rel_err(gx[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// (dims, instances); 32 instances in total, including both head shapes
/// used on top of 1000-wide embeddings.
const GRAD_SHAPES: [(&[usize], usize); 7] = [
    (&[1, 1], 4),
    (&[3, 2], 4),
    (&[4, 6, 1], 6),
    (&[8, 5, 3], 6),
    (&[2, 3, 2, 1], 6),
    (&[1000, 128, 1], 3),
    (&[1024, 1], 3),
];

fn gradients() -> Outcome {
    let mut r = rng(2);
    let (mut kan_worst, mut mlp_worst, mut kan_n, mut mlp_n) = (0.0f64, 0.0f64, 0, 0);
    for (dims, count) in GRAD_SHAPES {
        for c in 0..count {
            let grid = if c % 2 == 1 { ok(KanGrid::new(8, 2, -1.0, 1.0))? } else { KanGrid::default() };
            let mut kan = Head::Kan(ok(KanStack::init(dims, grid, &mut r))?);
            jitter(&mut kan, &mut r);
            kan_worst = kan_worst.max(head_grad_check(&mut kan, &mut r));
            kan_n += 1;

            let mut mlp = Head::Mlp(ok(MlpStack::init(dims, &mut r))?);
            jitter(&mut mlp, &mut r);
            mlp_worst = mlp_worst.max(head_grad_check(&mut mlp, &mut r));
            mlp_n += 1;
        }
    }

    let mut loss_worst = 0.0f64;
    for inst in 0..32 {
        let n = r.random_range(2..=40);
        let target: Vec<f64> = (0..n).map(|_| r.random_range(1.0..5.0)).collect();
        let pred: Vec<f64> = (0..n).map(|_| r.random_range(1.0..5.0)).collect();
        let cfg = LossConfig {
            alpha: r.random_range(0.0..2.0),
            beta: r.random_range(0.0..2.0),
            plcc_form: if inst % 2 == 0 { PlccLossForm::OneMinusR } else { PlccLossForm::HalfOneMinusR },
            ..LossConfig::default()
        };
        let (_, g) = ok(acc_loss(&pred, &target, &cfg))?;
        for i in 0..n {
            let mut p = pred.clone();
            p[i] += FD_STEP;
            let up = ok(acc_loss(&p, &target, &cfg))?.0;
            p[i] = pred[i] - FD_STEP;
            let down = ok(acc_loss(&p, &target, &cfg))?.0;
            loss_worst = loss_worst.max(rel_err(g[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    ensure!(kan_worst < GRAD_TOL, "KAN max rel err {kan_worst:e}");
    ensure!(mlp_worst < GRAD_TOL, "MLP max rel err {mlp_worst:e}");
    ensure!(loss_worst < GRAD_TOL, "loss max rel err {loss_worst:e}");
    Ok(format!(
        "max rel err KAN {kan_worst:.1e} ({kan_n} heads), MLP {mlp_worst:.1e} ({mlp_n} heads), loss {loss_worst:.1e} (32 batches)"
    ))
}

fn mse(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

fn fit_sin(head: Head<f64>) -> Result<(f64, Vec<f64>), String> {
    let (x, y) = sin_toy(SIN_TOY_SAMPLES, 0);
    let mut head = head;
    let report = ok(train_head(&mut head, Task::rgb(&x, &y), &sin_toy_train_config()))?;
    let pred = ok(predict_rows(&head, &x))?;
    Ok((mse(&pred, &y), report.loss_curve))
}

fn sin_toy_fit() -> Outcome {
    let kan = || KanStack::init(&[1, 1], KanGrid::default(), &mut rng(3)).map(Head::Kan);
    let (kan_mse, curve) = fit_sin(ok(kan())?)?;
    let (kan_mse2, curve2) = fit_sin(ok(kan())?)?;
    let (lin_mse, _) = fit_sin(Head::Mlp(ok(MlpStack::init(&[1, 1], &mut rng(3)))?))?;
    ensure!(kan_mse < 0.01, "KAN MSE {kan_mse:.4} >= 0.01");
    ensure!(lin_mse > 0.1, "linear MSE {lin_mse:.4} <= 0.1");
    ensure!(
        kan_mse.to_bits() == kan_mse2.to_bits() && curve == curve2,
        "retraining is not bit-identical"
    );
    Ok(format!("KAN MSE {kan_mse:.4}, linear MSE {lin_mse:.4}, rerun identical"))
}

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn brute_kendall_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut con, mut dis, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx * dy > 0.0 {
                con += 1;
            } else if dx * dy < 0.0 {
                dis += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (con - dis) as f64 / (((n0 - tx) * (n0 - ty)) as f64).sqrt()
}

fn metric_oracles() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    let mut tied = 0;
    for case in 0..200 {
        let n = r.random_range(5..=80);
        let with_ties = case % 2 == 1;
        let draw = |r: &mut ChaCha8Rng| {
            if with_ties {
                r.random_range(0..6) as f64
            } else {
                r.random_range(-10.0..10.0)
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut r)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.5 + draw(&mut r)).collect();
        if brute_ranks(&x).iter().all(|v| *v == brute_ranks(&x)[0]) {
            continue;
        }
        tied += with_ties as usize;
        for (name, got, want) in [
            ("PLCC", ok(plcc(&x, &y))?, brute_pearson(&x, &y)),
            ("SRCC", ok(srcc(&x, &y))?, brute_pearson(&brute_ranks(&x), &brute_ranks(&y))),
            ("KRCC", ok(krcc(&x, &y))?, brute_kendall_b(&x, &y)),
        ] {
            let d = (got - want).abs();
            ensure!(d < 1e-12, "case {case} {name}: {got} vs oracle {want}");
            worst = worst.max(d);
        }
    }
    let s = ok(srcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]))?;
    ensure!((s - 0.8).abs() < 1e-12, "SRCC([1,2,3,4],[1,3,2,4]) = {s}");
    Ok(format!("200 cases ({tied} with ties), max |diff| {worst:.1e}; worked SRCC = {s}"))
}

fn color_conversions() -> Outcome {
    let white = lab_pixel([1.0, 1.0, 1.0]);
    ensure!(
        (white[0] - 100.0).abs() <= 1e-2 && white[1].abs() <= 1e-2 && white[2].abs() <= 1e-2,
        "white -> LAB {white:?}"
    );
    let (mut yuv_chroma, mut lab_chroma) = (0.0f64, 0.0f64);
    for v in 0..=255 {
        let g = v as f64 / 255.0;
        let y = yuv_pixel([g, g, g]);
        let l = lab_pixel([g, g, g]);
        yuv_chroma = yuv_chroma.max(y[1].abs()).max(y[2].abs());
        lab_chroma = lab_chroma.max(l[1].abs()).max(l[2].abs());
    }
    ensure!(yuv_chroma <= 1e-6, "gray YUV chroma {yuv_chroma:e}");
    ensure!(lab_chroma <= 1e-2, "gray LAB chroma {lab_chroma:e}");

    let mut r = rng(5);
    let mut lin = 0.0f64;
    for _ in 0..1000 {
        let a: [f64; 3] = std::array::from_fn(|_| r.random_range(0.0..1.0));
        let b: [f64; 3] = std::array::from_fn(|_| r.random_range(0.0..1.0));
        let (s, t) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let mixed = yuv_pixel(std::array::from_fn(|i| s * a[i] + t * b[i]));
        let (ya, yb) = (yuv_pixel(a), yuv_pixel(b));
        for i in 0..3 {
            lin = lin.max((mixed[i] - (s * ya[i] + t * yb[i])).abs());
        }
    }
    ensure!(lin <= 1e-6, "YUV linearity error {lin:e}");
    Ok(format!(
        "white LAB ({:.4}, {:.1e}, {:.1e}); gray chroma YUV {yuv_chroma:.1e}, LAB {lab_chroma:.1e}; YUV linearity {lin:.1e}",
        white[0], white[1], white[2]
    ))
}

fn complexity() -> Outcome {
    let stem = LayerDesc::Conv {
        c_in: 3,
        c_out: 16,
        kernel: 3,
        stride: 2,
        padding: 1,
        groups: 1,
        bias: false,
    };
    let (stem_macs, _) = count_layer(&stem, 224, 224);
    ensure!(stem_macs == 5_419_008, "3x3/2 conv 3->16 at 224: {stem_macs} MACs");

    let mnv3 = EncoderSpec::new(EncoderKind::MobileNetV3Large).num_params();
    ensure!(mnv3 == 5_483_032, "MobileNetV3-Large params {mnv3}");

    let cfg = ModelConfig::default();
    let crop = count_model(&cfg, (384, 384), (1280, 1280), Counting::Headline).total_macs;
    ensure!(crop <= MAC_BUDGET, "default model {crop} MACs > {MAC_BUDGET}");
    let frame = count_model(&cfg, (384, 384), UHD_FRAME, Counting::Headline).total_macs;
    ensure!(frame <= MAC_BUDGET, "full-frame synthetic branch {frame} MACs > {MAC_BUDGET}");

    let wide = ModelConfig {
        head_dim: 512,
        ..ModelConfig::default()
    };
    let params = count_model(&wide, (384, 384), (1280, 1280), Counting::Headline).total_params;
    let delta = params as i64 - REFERENCE_PARAMS as i64;
    Ok(format!(
        "stem {stem_macs} MACs; MobileNetV3-Large {mnv3} params; \
         MACs {:.2}G (1280 crop) / {:.2}G (3840x2160) <= 37G; \
         d=512 params {params} vs 21.1M, delta {delta:+} ({:+.2}%)",
        crop as f64 / 1e9,
        frame as f64 / 1e9,
        100.0 * delta as f64 / REFERENCE_PARAMS as f64
    ))
}

fn test_image(w: usize, h: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    let data = (0..w * h * 3).map(|_| r.random_range(0.0..1.0)).collect();
    Image::rgb(w, h, data).expect("image")
}

fn architecture() -> Outcome {
    let enc = Encoder::random(EncoderKind::MobileNetV3Large, &mut rng(7));
    let mut r = rng(8);
    for s in [224, 384, 1280] {
        let x = ok(Tensor::new(vec![3, s, s], (0..3 * s * s).map(|_| r.random_range(-2.0..2.0)).collect()))?;
        let e = ok(enc.forward(&x))?;
        ensure!(e.len() == EMBEDDING_DIM, "embedding length {} at {s}x{s}", e.len());
        ensure!(e.iter().all(|v| v.is_finite()), "non-finite embedding at {s}x{s}");
    }

    let dir = ok(tempfile::tempdir())?;
    for d in [128, 512] {
        let cfg = ModelConfig {
            head_dim: d,
            ..ModelConfig::tiny()
        };
        let model = ok(DualBranchModel::random(cfg, &mut rng(d as u64)))?;
        let path = dir.path().join(format!("d{d}.larw"));
        ok(model.save(&path))?;
        let loaded = ok(DualBranchModel::load(&path, None))?;
        ensure!(
            ok(model.to_store())?.to_bytes() == ok(loaded.to_store())?.to_bytes(),
            "d={d}: reloaded weights differ"
        );
        ensure!(loaded.head().down_auth.out_dim() == d, "d={d}: wrong head width");
        let img = test_image(80, 72, d as u64);
        let (a, b) = (ok(model.predict(&img, ColorSpace::Rgb))?, ok(loaded.predict(&img, ColorSpace::Rgb))?);
        ensure!(a.to_bits() == b.to_bits(), "d={d}: score {a} vs reloaded {b}");
    }

    // Zeroing every fusion edge fed by the synthetic branch leaves the
    // authentic-only path.
    let mut model = ok(DualBranchModel::random(ModelConfig::tiny(), &mut rng(9)))?;
    let d = model.config().head_dim;
    let mut head = model.head().clone();
    let Head::Kan(fusion) = &mut head.fusion else {
        return Err("default fusion is not a KAN".into());
    };
    let layer = &mut fusion.layers_mut()[0];
    let nb = layer.grid().num_bases();
    let (bw, sc, bs) = (layer.base_weight.clone(), layer.spline_coeff.clone(), layer.base_scale.clone());
    let auth_only = ok(KanLayer::from_parts(
        d,
        1,
        layer.grid(),
        bw[..d].to_vec(),
        sc[..d * nb].to_vec(),
        bs[..d].to_vec(),
    ))?;
    for i in d..2 * d {
        layer.base_weight[i] = 0.0;
        layer.spline_coeff[i * nb..(i + 1) * nb].fill(0.0);
    }
    ok(model.set_head(head))?;
    let img = test_image(90, 70, 10);
    let full = ok(model.predict(&img, ColorSpace::Rgb))?;
    let emb = ok(model.auth_embedding(&img, ColorSpace::Rgb))?;
    let (down, _) = ok(model.head().down_auth.forward(&emb))?;
    let (y, _) = ok(auth_only.forward(&down))?;
    ensure!(full == y[0], "zeroed synthetic fusion {full} vs authentic-only {}", y[0]);
    Ok(format!("embedding {EMBEDDING_DIM} at 224/384/1280; d=128,512 round-trip bit-exact; zeroed synthetic path {full:.6} == authentic-only"))
}

fn loss_contracts() -> Outcome {
    let mut r = rng(11);
    let cfg = LossConfig::default();
    for _ in 0..100 {
        let n = r.random_range(2..30);
        let t: Vec<f64> = (0..n).map(|_| r.random_range(1.0..5.0)).collect();
        let (v, g) = ok(acc_loss(&t, &t, &cfg))?;
        ensure!(v.abs() < 1e-12 && g.iter().all(|x| x.abs() < 1e-12), "perfect prediction loss {v:e}");
        let mut p = t.clone();
        let i = r.random_range(0..n);
        p[i] += r.random_range(0.01..1.0);
        ensure!(ok(acc_loss(&p, &t, &cfg))?.0 > 0.0, "imperfect prediction has zero loss");
    }

    let pure_plcc = LossConfig {
        alpha: 0.0,
        ..LossConfig::default()
    };
    let t: Vec<f64> = (0..20).map(|_| r.random_range(1.0..5.0)).collect();
    let p: Vec<f64> = (0..20).map(|_| r.random_range(1.0..5.0)).collect();
    let base = ok(acc_loss(&p, &t, &pure_plcc))?.0;
    let scaled: Vec<f64> = p.iter().map(|v| 3.5 * v - 2.0).collect();
    let affine = ok(acc_loss(&scaled, &t, &pure_plcc))?.0;
    ensure!((base - affine).abs() < 1e-10, "PLCC term not affine invariant: {base} vs {affine}");

    let half = LossConfig {
        plcc_form: PlccLossForm::HalfOneMinusR,
        ..pure_plcc.clone()
    };
    let h = ok(acc_loss(&p, &t, &half))?.0;
    ensure!((2.0 * h - base).abs() < 1e-12, "half form {h} vs full {base}");

    let offsets = [0.3, -0.7, 1.1];
    let constant = |_: &Image, s: ColorSpace| -> nriqa::Result<f64> { Ok(3.0 + offsets[s.index()]) };
    let imgs: Vec<Image> = (0..6).map(|i| test_image(8, 8, 100 + i)).collect();
    let mos = [1.0, 2.5, 3.0, 4.0, 4.5, 2.0];
    let got = ok(color_space_loss(&constant, &imgs, &mos, &cfg))?;
    let want: f64 = offsets
        .iter()
        .map(|o| mos.iter().map(|m| (3.0 + o - m) * (3.0 + o - m)).sum::<f64>() / mos.len() as f64)
        .sum();
    ensure!((got - want).abs() < 1e-12, "color-space loss {got} vs closed form {want}");
    Ok(format!("zero iff exact; PLCC term affine invariant; color-space loss {got:.6} matches closed form"))
}

fn blur_pipeline() -> Outcome {
    let cfg = PipelineConfig::default();
    let (_, a) = ok(run_blur_pipeline(&cfg))?;
    let (_, b) = ok(run_blur_pipeline(&cfg))?;
    ensure!(a == b, "two runs with seed {} differ", cfg.seed);
    ensure!(a.test.srcc >= 0.9, "held-out SRCC {:.4} < 0.9", a.test.srcc);
    Ok(format!(
        "held-out SRCC {:.4} PLCC {:.4} on {} images ({} train); rerun identical",
        a.test.srcc, a.test.plcc, a.n_test, a.n_train
    ))
}

fn reproducibility() -> Outcome {
    let dir = ok(tempfile::tempdir())?;
    let weights = dir.path().join("m.larw");
    let img = dir.path().join("x.ppm");
    ok(nriqa::data::save_image(&test_image(96, 80, 12), &img))?;
    let bin = env!("CARGO_BIN_EXE_nriqa");
    let run = |args: &[&str]| -> Result<String, String> {
        let out = ok(Command::new(bin).args(args).output())?;
        ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    };
    let (w, i) = (weights.to_str().unwrap(), img.to_str().unwrap());
    run(&["init", "--tiny", "--seed", "3", "--out", w])?;
    let first = run(&["score", "--model", w, "--image", i, "--json"])?;
    let second = run(&["score", "--model", w, "--image", i, "--json"])?;
    ensure!(first == second, "score output differs:\n{first}\n{second}");
    let threaded = run(&["--threads", "3", "score", "--model", w, "--image", i, "--json"])?;
    ensure!(first == threaded, "score depends on thread count");

    let mut r = rng(13);
    let rows: Vec<Vec<f64>> = (0..64).map(|_| (0..12).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let mos: Vec<f64> = rows.iter().map(|x| 3.0 + x[0] - 0.5 * x[3] * x[3] + 0.2 * x[7]).collect();
    let features = ok(nriqa::data::FeatureMatrix::from_rows(&rows))?;
    let cfg = nriqa::trainer::TrainConfig {
        epochs: 5,
        batch_size: 8,
        ..Default::default()
    };
    let train = || -> Result<Vec<f64>, String> {
        let mut head = Head::Kan(ok(KanStack::init(&[12, 4, 1], KanGrid::default(), &mut rng(14)))?);
        Ok(ok(train_head(&mut head, Task::rgb(&features, &mos), &cfg))?.loss_curve)
    };
    let (c1, c2) = (train()?, train()?);
    ensure!(
        c1.iter().map(|v| v.to_bits()).eq(c2.iter().map(|v| v.to_bits())),
        "loss curves differ between replays"
    );
    let score: serde_json::Value = ok(serde_json::from_str(&first))?;
    Ok(format!(
        "score {} identical across runs and thread counts; {}-step loss curve replays bit-exactly",
        score["score"],
        c1.len()
    ))
}
