use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use nriqa::color::ColorSpace;
use nriqa::complexity::{
    branch_inputs, count_head_instance, count_model, ComplexityReport, Counting, MAC_BUDGET, MAC_NOTE, REFERENCE_PARAMS,
    UHD_FRAME,
};
use nriqa::data::{
    cache_dir_from_env, extract_joint_features, load_features, load_manifest, save_features, save_manifest,
    score_manifest, FeatureMatrix, Manifest, Split,
};
use nriqa::head::Head;
use nriqa::kan::{KanGrid, KanStack};
use nriqa::losses::mse;
use nriqa::metrics::{evaluate, EvalReport};
use nriqa::mlp::{build_matched_mlp, MlpStack};
use nriqa::model::{DualBranchModel, ModelConfig};
use nriqa::toy::{blur_corpus, sin_toy, sin_toy_train_config, write_blur_corpus, SIN_TOY_SAMPLES};
use nriqa::trainer::{holdout, kfold, loss_curves_csv, predict_rows, train_head, Task, TrainConfig, View};
use nriqa::weights::WeightStore;
use nriqa::{Error, Result};

#[derive(Parser)]
#[command(name = "nriqa", version, about = "No-reference image quality assessment")]
struct Cli {
    /// Print one JSON document instead of a plain-text table.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for decoding and feature extraction [default: all cores].
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Predict the quality score of images.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        image: Vec<PathBuf>,
        #[arg(long, default_value = "rgb")]
        space: ColorSpace,
    },
    /// Correlation report of predictions against manifest MOS, per color space.
    Eval {
        #[arg(long, required_unless_present = "stub_mos")]
        model: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, value_delimiter = ',', default_value = "rgb,yuv,lab")]
        spaces: Vec<ColorSpace>,
        /// Use the MOS column itself as the prediction (pipeline checks).
        #[arg(long, conflicts_with = "model")]
        stub_mos: bool,
    },
    /// Train a standalone regression head on a feature file.
    TrainHead {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        head: HeadChoice,
        /// Layer widths, input first [default: <feature cols>,1].
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[command(flatten)]
        train: TrainArgs,
        /// Fraction held out for evaluation; without it the training rows are scored.
        #[arg(long)]
        holdout: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        loss_curve: Option<PathBuf>,
    },
    /// Train a KAN and an MLP head on the same split and compare them.
    CompareHeads {
        #[arg(long, required_unless_present = "toy", conflicts_with = "toy")]
        features: Option<PathBuf>,
        #[arg(long, value_enum)]
        toy: Option<Toy>,
        /// KAN widths [default: <in>,1].
        #[arg(long, value_delimiter = ',')]
        kan_dims: Option<Vec<usize>>,
        /// MLP widths [default: <in>,1, a linear layer].
        #[arg(long, value_delimiter = ',', conflicts_with = "mlp_matched")]
        mlp_dims: Option<Vec<usize>>,
        /// Use the parameter-matched MLP instead of --mlp-dims.
        #[arg(long)]
        mlp_matched: bool,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
        #[arg(long)]
        loss_curve: Option<PathBuf>,
    },
    /// Inference MACs and parameter counts of a dual-branch model.
    Macs {
        /// Model weights; its `.cfg` sidecar supplies the architecture.
        #[arg(long, conflicts_with_all = ["config", "tiny"])]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "tiny")]
        config: Option<PathBuf>,
        #[arg(long)]
        tiny: bool,
        /// Authentic branch input, `N` or `WxH` [default: from the config].
        #[arg(long)]
        auth_size: Option<Size>,
        /// Synthetic branch input, `N` or `WxH` [default: from the config].
        #[arg(long)]
        synth_size: Option<Size>,
        /// Source image the branch inputs are derived from.
        #[arg(long, default_value = "3840x2160")]
        image_size: Size,
        /// Also count squeeze-excitation FC layers.
        #[arg(long)]
        strict: bool,
        /// Print every layer.
        #[arg(long)]
        layers: bool,
    },
    /// Seeded k-fold split of a manifest.
    Kfold {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write `fold_<i>.csv` manifests (fold i = test, rest = train).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Seeded random holdout: marks a fraction of a manifest as `val`.
    Holdout {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded randomly initialized model.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "tiny")]
        config: Option<PathBuf>,
        #[arg(long)]
        tiny: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Joint embeddings of manifest images as a feature file.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, default_value = "rgb")]
        space: ColorSpace,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the head of a dual-branch model on a manifest; encoders stay frozen.
    TrainModel {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "train")]
        split: Split,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        loss_curve: Option<PathBuf>,
    },
    /// Generate the blurred-texture toy corpus with a manifest.
    MakeToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        bases: usize,
        #[arg(long, default_value_t = 8)]
        test_bases: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    /// key=value training config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainArgs {
    fn resolve(&self, base: TrainConfig) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => base,
        };
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.lr_max = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadChoice {
    Kan,
    Mlp,
    MlpMatched,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toy {
    /// `y = sin(3x)` on one feature.
    Sin,
}

#[derive(Clone, Copy, Debug)]
struct Size(usize, usize);

impl std::str::FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (w, h) = s.split_once(['x', 'X']).unwrap_or((s, s));
        let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad size `{s}`: {e}"));
        Ok(Size(p(w)?, p(h)?))
    }
}

/// What a command prints: plain text, its JSON form, and whether a partial
/// failure should still turn the exit code to 1.
struct Output {
    text: String,
    json: Value,
    failed: bool,
}

impl Output {
    fn ok(text: String, json: Value) -> Self {
        Self {
            text,
            json,
            failed: false,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.cmd) {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else {
                print!("{}", out.text);
            }
            if out.failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Cmd) -> Result<Output> {
    match cmd {
        Cmd::Score { model, image, space } => score(&model, &image, space),
        Cmd::Eval {
            model,
            manifest,
            split,
            spaces,
            stub_mos,
        } => eval(model.as_deref().filter(|_| !stub_mos), &manifest, split, &spaces),
        Cmd::TrainHead {
            features,
            head,
            dims,
            train,
            holdout,
            out,
            loss_curve,
        } => {
            let cfg = train.resolve(TrainConfig::default())?;
            train_head_cmd(&features, head, dims, &cfg, holdout, out.as_deref(), loss_curve.as_deref())
        }
        Cmd::CompareHeads {
            features,
            toy,
            kan_dims,
            mlp_dims,
            mlp_matched,
            train,
            holdout,
            loss_curve,
        } => {
            let (f, mos, base) = match (features, toy) {
                (Some(p), _) => {
                    let (f, m) = load_features(&p)?;
                    (f, m, TrainConfig::default())
                }
                (None, Some(Toy::Sin)) => {
                    let (f, m) = sin_toy(SIN_TOY_SAMPLES, train.seed.unwrap_or(0));
                    (f, m, sin_toy_train_config())
                }
                (None, None) => unreachable!("clap requires --features or --toy"),
            };
            let cfg = train.resolve(base)?;
            let mlp = if mlp_matched { MlpSpec::Matched } else { MlpSpec::Dims(mlp_dims) };
            compare_heads(&f, &mos, kan_dims, mlp, &cfg, holdout, loss_curve.as_deref())
        }
        Cmd::Macs {
            model,
            config,
            tiny,
            auth_size,
            synth_size,
            image_size,
            strict,
            layers,
        } => {
            let cfg = match (model, config) {
                (Some(m), _) => ModelConfig::load(&nriqa::model::config_path(&m))?,
                (None, Some(c)) => ModelConfig::load(&c)?,
                (None, None) if tiny => ModelConfig::tiny(),
                (None, None) => ModelConfig::default(),
            };
            let mode = if strict { Counting::Strict } else { Counting::Headline };
            macs(&cfg, auth_size, synth_size, image_size, mode, layers)
        }
        Cmd::Kfold {
            manifest,
            k,
            seed,
            out_dir,
        } => kfold_cmd(&manifest, k, seed, out_dir.as_deref()),
        Cmd::Holdout {
            manifest,
            fraction,
            seed,
            out,
        } => holdout_cmd(&manifest, fraction, seed, &out),
        Cmd::Init { out, config, tiny, seed } => {
            let cfg = match config {
                Some(c) => ModelConfig::load(&c)?,
                None if tiny => ModelConfig::tiny(),
                None => ModelConfig::default(),
            };
            let model = DualBranchModel::random(cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
            model.save(&out)?;
            Ok(Output::ok(
                format!("wrote {} ({} parameters)\n", out.display(), model.num_params()),
                json!({"out": out, "params": model.num_params()}),
            ))
        }
        Cmd::Extract {
            model,
            manifest,
            split,
            space,
            out,
        } => {
            let model = DualBranchModel::load(&model, None)?;
            let m = select_split(load_manifest(&manifest)?, split)?;
            let (f, mos) = extract_joint_features(&model, space, &m, cache_dir_from_env().as_deref())?;
            save_features(&out, &f, &mos)?;
            Ok(Output::ok(
                format!("wrote {} ({} x {})\n", out.display(), f.rows(), f.cols()),
                json!({"out": out, "rows": f.rows(), "cols": f.cols(), "space": space.name()}),
            ))
        }
        Cmd::TrainModel {
            model,
            manifest,
            split,
            train,
            out,
            loss_curve,
        } => {
            let cfg = train.resolve(TrainConfig::default())?;
            train_model(&model, &manifest, split, &cfg, &out, loss_curve.as_deref())
        }
        Cmd::MakeToy {
            out,
            bases,
            test_bases,
            size,
            seed,
        } => {
            if test_bases >= bases {
                return Err(Error::InvalidArgument("--test-bases must be below --bases".into()));
            }
            let corpus = blur_corpus(bases, size, seed)?;
            let m = write_blur_corpus(&corpus, &out, test_bases)?;
            let manifest = out.join("manifest.csv");
            Ok(Output::ok(
                format!("wrote {} images and {}\n", m.len(), manifest.display()),
                json!({"manifest": manifest, "images": m.len()}),
            ))
        }
    }
}

fn select_split(m: Manifest, split: Option<Split>) -> Result<Manifest> {
    let m = match split {
        Some(s) => m.filter_split(s),
        None => m,
    };
    if m.is_empty() {
        return Err(Error::InvalidArgument("no manifest entries in the requested split".into()));
    }
    Ok(m)
}

fn score(model: &Path, images: &[PathBuf], space: ColorSpace) -> Result<Output> {
    let model = DualBranchModel::load(model, None)?;
    let mut text = String::new();
    let mut docs = Vec::new();
    for p in images {
        let s = model.predict(&nriqa::data::decode_image(p)?, space)?;
        text.push_str(&format!("{}\t{s}\n", p.display()));
        docs.push(json!({"path": p, "space": space.name(), "score": s}));
    }
    let json = if docs.len() == 1 { docs.remove(0) } else { Value::Array(docs) };
    Ok(Output::ok(text, json))
}

fn metrics_json(r: &EvalReport) -> Value {
    let mut m = serde_json::Map::new();
    for (k, v) in EvalReport::COLUMNS.iter().zip(r.values()) {
        m.insert((*k).into(), json!(v));
    }
    m.insert("n".into(), json!(r.n));
    Value::Object(m)
}

fn metrics_row(r: &EvalReport) -> String {
    r.values().iter().map(|v| format!("{v:>8.4}")).collect::<Vec<_>>().join("  ")
}

fn metrics_header() -> String {
    EvalReport::COLUMNS.iter().map(|c| format!("{c:>8}")).collect::<Vec<_>>().join("  ")
}

fn eval(model: Option<&Path>, manifest: &Path, split: Option<Split>, spaces: &[ColorSpace]) -> Result<Output> {
    let m = select_split(load_manifest(manifest)?, split)?;
    let model = model.map(|p| DualBranchModel::load(p, None)).transpose()?;
    let mos = m.mos();
    let mut text = format!(
        "# {} split={} n={}\n{:<6}{}\n",
        manifest.display(),
        split.map_or("all", |s| s.name()),
        m.len(),
        "space",
        metrics_header()
    );
    let mut rows = Vec::new();
    let mut failed = false;
    for &space in spaces {
        let preds = match &model {
            Some(model) => score_manifest(model, space, &m)?,
            None => mos.clone(),
        };
        match evaluate(&preds, &mos) {
            Ok(r) => {
                text.push_str(&format!("{:<6}{}\n", space.name(), metrics_row(&r)));
                let mut j = metrics_json(&r);
                j["space"] = json!(space.name());
                rows.push(j);
            }
            Err(e) => {
                failed = true;
                text.push_str(&format!("{:<6}error: {e}\n", space.name()));
                rows.push(json!({"space": space.name(), "error": e.to_string()}));
            }
        }
    }
    let json = json!({
        "manifest": manifest,
        "split": split.map(|s| s.name()),
        "n": m.len(),
        "columns": EvalReport::COLUMNS,
        "spaces": rows,
    });
    Ok(Output { text, json, failed })
}

enum MlpSpec {
    Dims(Option<Vec<usize>>),
    Matched,
}

fn check_dims(dims: &[usize], in_dim: usize) -> Result<()> {
    if dims.len() < 2 || dims[0] != in_dim || dims.last() != Some(&1) {
        return Err(Error::InvalidArgument(format!(
            "head dims must run from the feature width {in_dim} to 1, got {dims:?}"
        )));
    }
    Ok(())
}

fn build_kan(dims: Option<Vec<usize>>, in_dim: usize, rng: &mut ChaCha8Rng) -> Result<Head<f64>> {
    let dims = dims.unwrap_or_else(|| vec![in_dim, 1]);
    check_dims(&dims, in_dim)?;
    Ok(Head::Kan(KanStack::init(&dims, KanGrid::default(), rng)?))
}

fn build_mlp(spec: MlpSpec, in_dim: usize, rng: &mut ChaCha8Rng) -> Result<Head<f64>> {
    match spec {
        MlpSpec::Matched => Ok(Head::Mlp(build_matched_mlp(in_dim, rng)?)),
        MlpSpec::Dims(dims) => {
            let dims = dims.unwrap_or_else(|| vec![in_dim, 1]);
            check_dims(&dims, in_dim)?;
            Ok(Head::Mlp(MlpStack::init(&dims, rng)?))
        }
    }
}

fn join_dims(d: &[usize]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Row indices for training and for evaluation; without a holdout both are
/// every row.
fn split_rows(n: usize, fraction: Option<f64>, seed: u64) -> Result<(Vec<usize>, Vec<usize>, &'static str)> {
    match fraction {
        Some(f) if f > 0.0 => {
            let (tr, te) = holdout(n, f, seed)?;
            Ok((tr, te, "holdout"))
        }
        _ => Ok(((0..n).collect(), (0..n).collect(), "train")),
    }
}

struct Fitted {
    curve: Vec<f64>,
    steps: usize,
    eval: EvalReport,
    mse: f64,
    macs: u64,
    params: usize,
}

fn fit_and_score(
    head: &mut Head<f64>,
    f: &FeatureMatrix,
    mos: &[f64],
    tr: &[usize],
    te: &[usize],
    cfg: &TrainConfig,
) -> Result<Fitted> {
    let (ftr, fte) = (f.select(tr), f.select(te));
    let mtr: Vec<f64> = tr.iter().map(|&i| mos[i]).collect();
    let mte: Vec<f64> = te.iter().map(|&i| mos[i]).collect();
    let rep = train_head(head, Task::rgb(&ftr, &mtr), cfg)?;
    let target = nriqa::trainer::scale_mos(&mte, rep.mos_scale);
    let pred = predict_rows(head, &fte)?;
    let macs = count_head_instance(head, KanGrid::default(), "").iter().map(|r| r.macs).sum();
    Ok(Fitted {
        eval: evaluate(&pred, &target)?,
        mse: mse(&pred, &target)?.0,
        curve: rep.loss_curve,
        steps: rep.steps,
        macs,
        params: head.num_params(),
    })
}

fn train_head_cmd(
    features: &Path,
    choice: HeadChoice,
    dims: Option<Vec<usize>>,
    cfg: &TrainConfig,
    holdout_frac: Option<f64>,
    out: Option<&Path>,
    curve_path: Option<&Path>,
) -> Result<Output> {
    let (f, mos) = load_features(features)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head = match choice {
        HeadChoice::Kan => build_kan(dims, f.cols(), &mut rng)?,
        HeadChoice::Mlp => build_mlp(MlpSpec::Dims(dims), f.cols(), &mut rng)?,
        HeadChoice::MlpMatched => build_mlp(MlpSpec::Matched, f.cols(), &mut rng)?,
    };
    let (tr, te, subset) = split_rows(f.rows(), holdout_frac, cfg.seed)?;
    let fit = fit_and_score(&mut head, &f, &mos, &tr, &te, cfg)?;
    if let Some(p) = out {
        let mut store = WeightStore::new();
        head.write_to(&mut store, "head.")?;
        store.save(p)?;
    }
    if let Some(p) = curve_path {
        std::fs::write(p, loss_curves_csv(&["loss"], &[&fit.curve])).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
    }
    let dims = head.dims();
    let text = format!(
        "head {} dims {} params {} MACs {}\nepochs {} steps {} final_loss {:.6}\n{:<10}{}  {:>8}\n{:<10}{}  {:>8.4}\n",
        head.kind(),
        join_dims(&dims),
        fit.params,
        fit.macs,
        cfg.epochs,
        fit.steps,
        fit.curve.last().copied().unwrap_or(f64::NAN),
        "subset",
        metrics_header(),
        "MSE",
        format!("{subset}({})", te.len()),
        metrics_row(&fit.eval),
        fit.mse,
    );
    let mut eval = metrics_json(&fit.eval);
    eval["subset"] = json!(subset);
    eval["MSE"] = json!(fit.mse);
    let json = json!({
        "head": head.kind().name(),
        "dims": dims,
        "params": fit.params,
        "macs": fit.macs,
        "train": {"epochs": cfg.epochs, "steps": fit.steps, "loss_curve": fit.curve},
        "eval": eval,
        "out": out,
    });
    Ok(Output::ok(text, json))
}

fn compare_heads(
    f: &FeatureMatrix,
    mos: &[f64],
    kan_dims: Option<Vec<usize>>,
    mlp: MlpSpec,
    cfg: &TrainConfig,
    holdout_frac: f64,
    curve_path: Option<&Path>,
) -> Result<Output> {
    let (tr, te, subset) = split_rows(f.rows(), Some(holdout_frac), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut heads = [
        ("MLP", build_mlp(mlp, f.cols(), &mut rng)?),
        ("KAN", build_kan(kan_dims, f.cols(), &mut rng)?),
    ];
    let mut text = format!(
        "# {subset} n={}\n{:<5}{:>14}{}  {:>10}  {:>12}  {:>10}\n",
        te.len(),
        "head",
        "dims",
        metrics_header(),
        "MSE",
        "FLOPs",
        "params"
    );
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (name, head) in heads.iter_mut() {
        let fit = fit_and_score(head, f, mos, &tr, &te, cfg)?;
        let dims = join_dims(&head.dims());
        text.push_str(&format!(
            "{name:<5}{dims:>14}{}  {:>10.6}  {:>12}  {:>10}\n",
            metrics_row(&fit.eval),
            fit.mse,
            2 * fit.macs,
            fit.params
        ));
        let mut j = metrics_json(&fit.eval);
        j["head"] = json!(name);
        j["dims"] = json!(head.dims());
        j["MSE"] = json!(fit.mse);
        j["MACs"] = json!(fit.macs);
        j["FLOPs"] = json!(2 * fit.macs);
        j["params"] = json!(fit.params);
        rows.push(j);
        curves.push(fit.curve);
    }
    if let Some(p) = curve_path {
        let refs: Vec<&[f64]> = curves.iter().map(Vec::as_slice).collect();
        std::fs::write(p, loss_curves_csv(&["mlp", "kan"], &refs)).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
    }
    let json = json!({"subset": subset, "n": te.len(), "rows": rows});
    Ok(Output::ok(text, json))
}

fn giga(v: u64) -> f64 {
    v as f64 / 1e9
}

fn macs(
    cfg: &ModelConfig,
    auth: Option<Size>,
    synth: Option<Size>,
    image: Size,
    mode: Counting,
    layers: bool,
) -> Result<Output> {
    cfg.validate()?;
    let (a_def, s_def) = branch_inputs(cfg, image.0, image.1);
    let a = auth.map_or(a_def, |s| (s.0, s.1));
    let s = synth.map_or(s_def, |s| (s.0, s.1));
    let report = count_model(cfg, a, s, mode);
    // Alternative reading of the budget: synthetic branch at the full frame.
    let full = count_model(cfg, a, UHD_FRAME, mode);
    let within = |r: &ComplexityReport| r.total_macs <= MAC_BUDGET;
    let delta = report.total_params as i64 - REFERENCE_PARAMS as i64;
    let pct = 100.0 * delta as f64 / REFERENCE_PARAMS as f64;

    let mut text = String::new();
    if layers {
        text.push_str(&report.to_table());
    } else {
        text.push_str(&format!("# {MAC_NOTE}; counting={}\n", mode.name()));
    }
    for (label, prefix) in [("authentic", "authentic."), ("synthetic", "synthetic."), ("head", "head.")] {
        let (m, p) = report.subtotal(prefix);
        let input = match label {
            "authentic" => format!("{}x{}", a.0, a.1),
            "synthetic" => format!("{}x{}", s.0, s.1),
            _ => "-".into(),
        };
        text.push_str(&format!("{label:<10} input {input:>10}  MACs {m:>15}  params {p:>10}\n"));
    }
    text.push_str(&format!(
        "total MACs {} ({:.3} G); budget {:.0} G: {}\n",
        report.total_macs,
        giga(report.total_macs),
        giga(MAC_BUDGET),
        if within(&report) { "within" } else { "exceeds" }
    ));
    text.push_str(&format!(
        "total MACs with synthetic input at {}x{}: {} ({:.3} G): {}\n",
        UHD_FRAME.0,
        UHD_FRAME.1,
        full.total_macs,
        giga(full.total_macs),
        if within(&full) { "within" } else { "exceeds" }
    ));
    text.push_str(&format!(
        "total params {}; reference {}: delta {delta:+} ({pct:+.2}%)\n",
        report.total_params, REFERENCE_PARAMS
    ));
    let json = json!({
        "counting": mode.name(),
        "note": MAC_NOTE,
        "inputs": report.inputs,
        "total_macs": report.total_macs,
        "total_params": report.total_params,
        "budget_macs": MAC_BUDGET,
        "within_budget": within(&report),
        "full_frame": {
            "synthetic_input": [UHD_FRAME.0, UHD_FRAME.1],
            "total_macs": full.total_macs,
            "within_budget": within(&full),
        },
        "reference_params": REFERENCE_PARAMS,
        "params_delta": delta,
        "layers": if layers { json!(report.rows) } else { Value::Null },
    });
    Ok(Output::ok(text, json))
}

fn kfold_cmd(manifest: &Path, k: usize, seed: u64, out_dir: Option<&Path>) -> Result<Output> {
    let m = load_manifest(manifest)?;
    let plan = kfold(m.len(), k, seed)?;
    let mut text = format!("# k={k} seed={seed} n={}\nfold\tsize\tindices\n", m.len());
    for (i, f) in plan.folds.iter().enumerate() {
        text.push_str(&format!("{i}\t{}\t{}\n", f.len(), join_dims(f)));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        for (i, fold) in plan.folds.iter().enumerate() {
            let mut fm = m.clone();
            for (j, e) in fm.entries.iter_mut().enumerate() {
                e.split = if fold.contains(&j) { Split::Test } else { Split::Train };
            }
            save_manifest(&fm, &dir.join(format!("fold_{i}.csv")))?;
        }
    }
    let json = json!({"k": k, "seed": seed, "n": m.len(), "folds": plan.folds});
    Ok(Output::ok(text, json))
}

fn holdout_cmd(manifest: &Path, fraction: f64, seed: u64, out: &Path) -> Result<Output> {
    let mut m = load_manifest(manifest)?;
    let (train, held) = holdout(m.len(), fraction, seed)?;
    for &i in &train {
        m.entries[i].split = Split::Train;
    }
    for &i in &held {
        m.entries[i].split = Split::Val;
    }
    save_manifest(&m, out)?;
    Ok(Output::ok(
        format!("wrote {}: {} train, {} val\n", out.display(), train.len(), held.len()),
        json!({"out": out, "train": train, "val": held}),
    ))
}

fn train_model(
    model_path: &Path,
    manifest: &Path,
    split: Split,
    cfg: &TrainConfig,
    out: &Path,
    curve_path: Option<&Path>,
) -> Result<Output> {
    if cfg.normalize_mos {
        return Err(Error::InvalidArgument(
            "normalize_mos is not supported here: the saved model would score in the scaled range".into(),
        ));
    }
    let mut model = DualBranchModel::load(model_path, None)?;
    let m = select_split(load_manifest(manifest)?, Some(split))?;
    let mut spaces = vec![ColorSpace::Rgb];
    if cfg.loss.lambda_rob > 0.0 {
        for &s in &cfg.loss.color_spaces {
            if !spaces.contains(&s) {
                spaces.push(s);
            }
        }
    }
    let cache = cache_dir_from_env();
    let mut features = Vec::with_capacity(spaces.len());
    for &s in &spaces {
        features.push(extract_joint_features(&model, s, &m, cache.as_deref())?.0);
    }
    let mos = m.mos();
    let task = Task {
        views: spaces
            .iter()
            .zip(&features)
            .map(|(&space, features)| View { space, features })
            .collect(),
        mos: &mos,
    };
    let mut head = model.head().clone();
    let rep = train_head(&mut head, task, cfg)?;
    let preds = predict_rows(&head, &features[0])?;
    let eval = evaluate(&preds, &mos)?;
    model.set_head(head)?;
    model.save(out)?;
    if let Some(p) = curve_path {
        std::fs::write(p, loss_curves_csv(&["loss"], &[&rep.loss_curve])).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
    }
    let text = format!(
        "wrote {} after {} steps; final_loss {:.6}\n{:<10}{}\n{:<10}{}\n",
        out.display(),
        rep.steps,
        rep.loss_curve.last().copied().unwrap_or(f64::NAN),
        "subset",
        metrics_header(),
        format!("{}({})", split.name(), m.len()),
        metrics_row(&eval)
    );
    let mut e = metrics_json(&eval);
    e["subset"] = json!(split.name());
    let json = json!({"out": out, "steps": rep.steps, "loss_curve": rep.loss_curve, "eval": e});
    Ok(Output::ok(text, json))
}
