use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use semirandom::bounds::{
    approx_lower_bound, expected_risk_bound, generalization_bound, importance_constants,
    random_feature_lower_bound, BoundInputs,
};
use semirandom::data::{
    gen_sine_split, load_csv, load_libsvm_with, normalize, to_csv_string, LibsvmOptions,
    Normalization, NormStats, SINE_POINTS,
};
use semirandom::features::stream;
use semirandom::network::{Architecture, DeepModel, Model, ModelFile, ModelSpec, Network, UnitKind, WeightInit};
use semirandom::numerics::Matrix;
use semirandom::oracle::{path_expand, verify_landscape, LandscapeConfig, LandscapeInstance};
use semirandom::training::{error_rate, gradcheck, loss_value, mean_squared_error, train, Loss, TrainConfig};
use semirandom::{ActivationOrder, Dataset, Split};

use crate::config::ConfigFile;
use crate::Failure;

#[derive(Debug, Parser)]
#[command(name = "semirandom", version, about = "Semi-random feature networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its history and weights.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Compare gradient descent on random shallow instances with the
    /// least-squares optimum.
    OracleCheck(OracleArgs),
    /// Compare analytic gradients with finite differences on random models.
    Gradcheck(GradcheckArgs),
    /// Compare deep forward passes with their path-tensor expansion.
    Pathcheck(PathcheckArgs),
    /// Evaluate the generalization and approximation bound formulas.
    Bounds(BoundsArgs),
    /// Write a generated dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Sine,
    Libsvm,
    Csv,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Task as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset source.
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Training file for `libsvm` and `csv` tasks.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Test file for `libsvm` and `csv` tasks.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// CSV target column (0-based); defaults to the last column.
    #[arg(long)]
    target_column: Option<usize>,
    /// Sine training points.
    #[arg(long)]
    n_train: Option<usize>,
    /// Sine test points.
    #[arg(long)]
    n_test: Option<usize>,
    /// `none` or `standardize`; tabular data defaults to `standardize`.
    #[arg(long)]
    normalize: Option<String>,
}

const DATA_KEYS: &[&str] = &["task", "data", "test-data", "target-column", "n-train", "n-test", "normalize"];

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Layer sizes `d-n1-...-nH-c`.
    #[arg(long)]
    arch: Option<String>,
    /// lsr, ssr, relu, rf or lsr-ie.
    #[arg(long)]
    unit: Option<String>,
    /// Activation order; defaults to 0 for lsr, rf, lsr-ie and 1 for ssr.
    #[arg(long)]
    s: Option<u32>,
    /// Random banks for lsr-ie.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning-rate factor applied after every epoch.
    #[arg(long)]
    decay: Option<f64>,
    /// squared or softmax-cross-entropy.
    #[arg(long)]
    loss: Option<String>,
    /// Weight init: `fan-in` or a fixed scale.
    #[arg(long)]
    init: Option<String>,
    /// First-layer gate bias range; defaults to the largest input norm.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Record wall-clock seconds in the history.
    #[arg(long)]
    timing: bool,
    /// key=value settings, overridden by flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

const TRAIN_KEYS: &[&str] = &[
    "arch", "unit", "s", "k", "lr", "momentum", "batch", "epochs", "decay", "loss", "init",
    "radius", "seed", "history", "model-out", "timing",
];

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sine split to generate.
    #[arg(long)]
    split: Option<String>,
    /// Seed for generated data; defaults to the model's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write predictions as CSV.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

const EVAL_KEYS: &[&str] = &["model", "split", "seed", "predictions"];

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    instances: Option<usize>,
    /// Minimum fraction of instances that must converge.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

const ORACLE_KEYS: &[&str] = &["instances", "threshold", "max-iters", "seed", "out"];

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    models: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Finite-difference step.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

const GRADCHECK_KEYS: &[&str] = &["models", "max-depth", "step", "tol", "seed", "out"];

#[derive(Debug, Args)]
pub struct PathcheckArgs {
    #[arg(long)]
    nets: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    max_width: Option<usize>,
    #[arg(long)]
    max_dim: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

const PATHCHECK_KEYS: &[&str] = &["nets", "max-depth", "max-width", "max-dim", "tol", "seed", "out"];

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    c_y: Option<f64>,
    #[arg(long)]
    c_w: Option<f64>,
    #[arg(long)]
    c_sigma_x: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Smoothness constant of the target class.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    /// Hidden widths, comma separated.
    #[arg(long)]
    widths: Option<String>,
    /// Squared residual of the optimal fit, for the expected-risk bound.
    #[arg(long)]
    residual: Option<f64>,
    #[arg(long)]
    json: bool,
    /// Accepted for uniformity; the bounds are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

const BOUNDS_KEYS: &[&str] = &[
    "c-y", "c-w", "c-sigma-x", "m", "delta", "c", "d", "widths", "residual", "json", "seed",
];

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of points.
    #[arg(long)]
    m: Option<usize>,
    /// train or test stream.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

const GEN_KEYS: &[&str] = &["m", "split", "seed", "out"];

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Pathcheck(a) => cmd_pathcheck(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::GenData(a) => cmd_gen_data(a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Failure::Usage(msg.into()).into()
}

fn parse<T: std::str::FromStr>(raw: &str, what: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| usage(format!("invalid {what} {raw:?}: {e}")))
}

fn keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    let mut all: Vec<&str> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    all.push("config");
    all
}

fn write_artifact(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn parse_split(raw: &str) -> anyhow::Result<Split> {
    match raw {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(usage(format!("split must be train or test, got {other:?}"))),
    }
}

fn csv_target(path: &Path, given: Option<usize>) -> anyhow::Result<usize> {
    if let Some(t) = given {
        return Ok(t);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = text.lines().next().unwrap_or("");
    Ok(header.split(',').count().saturating_sub(1))
}

/// Loaded splits plus what is needed to reproduce the preprocessing.
struct LoadedData {
    train: Dataset,
    test: Option<Dataset>,
    stats: Option<NormStats>,
}

fn load_task_data(cfg: &ConfigFile, a: &DataArgs, seed: u64) -> anyhow::Result<(Task, LoadedData)> {
    let task = cfg.or(a.task, "task", Task::Sine)?;
    let norm_default = if task == Task::Sine { "none" } else { "standardize" };
    let norm: Normalization = parse(&cfg.or(a.normalize.clone(), "normalize", norm_default.to_owned())?, "normalization")?;
    let (train, test) = match task {
        Task::Sine => {
            let n_train = cfg.or(a.n_train, "n-train", SINE_POINTS)?;
            let n_test = cfg.or(a.n_test, "n-test", SINE_POINTS)?;
            if n_train == 0 {
                return Err(usage("n-train must be at least 1"));
            }
            let test = (n_test > 0).then(|| gen_sine_split(n_test, seed, Split::Test));
            (gen_sine_split(n_train, seed, Split::Train), test)
        }
        Task::Libsvm => {
            let path = cfg.get(a.data.clone(), "data")?.ok_or_else(|| usage("--data is required"))?;
            let train = load_libsvm_with(&path, &LibsvmOptions::default())?;
            let test = match cfg.get(a.test_data.clone(), "test-data")? {
                Some(p) => Some(load_libsvm_with(
                    &p,
                    &LibsvmOptions {
                        dim: Some(train.dim()),
                        labels: train.labels.clone(),
                        split: Split::Test,
                    },
                )?),
                None => None,
            };
            (train, test)
        }
        Task::Csv => {
            let path = cfg.get(a.data.clone(), "data")?.ok_or_else(|| usage("--data is required"))?;
            let target = csv_target(&path, cfg.get(a.target_column, "target-column")?)?;
            let train = load_csv(&path, target)?;
            let test = match cfg.get(a.test_data.clone(), "test-data")? {
                Some(p) => {
                    let mut t = load_csv(&p, target)?;
                    t.split = Split::Test;
                    Some(t)
                }
                None => None,
            };
            (train, test)
        }
    };
    let (train, test, stats) = normalize(&train, test.as_ref(), norm)?;
    let stats = (norm != Normalization::None).then_some(stats);
    Ok((task, LoadedData { train, test, stats }))
}

fn parse_init(raw: &str) -> anyhow::Result<WeightInit> {
    if raw == "fan-in" {
        return Ok(WeightInit::FanIn);
    }
    let scale: f64 = parse(raw, "init")?;
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(usage("init scale must be finite and non-negative"));
    }
    Ok(WeightInit::Scaled(scale))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let cfg = ConfigFile::load(a.config.as_deref(), &keys(&[TRAIN_KEYS, DATA_KEYS]))?;
    let seed = cfg.or(a.seed, "seed", 0)?;
    let (task, data) = load_task_data(&cfg, &a.data, seed)?;
    let (d, c) = (data.train.dim(), data.train.outputs());

    let default_arch = match task {
        Task::Sine => "1-50-50-1".to_owned(),
        _ => {
            let w = 16 * d;
            format!("{d}-{w}-{w}-{w}-{w}-{c}")
        }
    };
    let arch: Architecture = parse(&cfg.or(a.arch.clone(), "arch", default_arch)?, "architecture")?;
    if arch.input_dim != d || arch.outputs != c {
        return Err(usage(format!(
            "architecture {arch} does not fit data with {d} inputs and {c} outputs"
        )));
    }
    let unit: UnitKind = parse(&cfg.or(a.unit.clone(), "unit", "lsr".to_owned())?, "unit")?;
    if unit != UnitKind::Relu && arch.widths.is_empty() {
        return Err(usage(format!("{unit} needs at least one hidden layer")));
    }
    let s = ActivationOrder(cfg.or(a.s, "s", unit.default_order().0)?);
    let banks = cfg.or(a.k, "k", 1)?;
    if banks == 0 || (banks > 1 && unit != UnitKind::LsrIe) {
        return Err(usage("--k must be 1, or at least 1 with --unit lsr-ie"));
    }

    let mut tc = match task {
        Task::Sine => TrainConfig::sine(),
        _ => TrainConfig::tabular(),
    };
    tc.learning_rate = cfg.or(a.lr, "lr", tc.learning_rate)?;
    tc.momentum = cfg.or(a.momentum, "momentum", tc.momentum)?;
    tc.batch_size = cfg.or(a.batch, "batch", tc.batch_size)?;
    tc.epochs = cfg.or(a.epochs, "epochs", tc.epochs)?;
    tc.lr_decay_per_epoch = cfg.or(a.decay, "decay", tc.lr_decay_per_epoch)?;
    if let Some(l) = cfg.get(a.loss.clone(), "loss")? {
        tc.loss = parse::<Loss>(&l, "loss")?;
    }
    tc.seed = seed;
    tc.record_time = cfg.switch(a.timing, "timing")?;
    tc.validate().map_err(|e| usage(e.to_string()))?;

    let default_init = if task == Task::Sine { "0.1" } else { "fan-in" };
    let init = parse_init(&cfg.or(a.init.clone(), "init", default_init.to_owned())?)?;
    let radius = cfg.or(a.radius, "radius", data.train.sampling_radius())?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(usage("radius must be positive"));
    }
    let spec = ModelSpec {
        unit,
        arch,
        s,
        banks,
        radius,
        init,
        seed,
    };
    let mut model = Model::build(&spec).map_err(|e| usage(e.to_string()))?;
    let history = train(&mut model, &data.train, data.test.as_ref(), &tc)?;

    let history_path = cfg.or(a.history.clone(), "history", PathBuf::from("history.csv"))?;
    let model_path = cfg.or(a.model_out.clone(), "model-out", PathBuf::from("model.json"))?;
    history.write_csv(&history_path)?;
    let mut file = ModelFile::new(&spec, &model);
    file.normalization = data.stats.clone();
    file.labels = data.train.labels.clone();
    file.save(&model_path)?;

    let train_loss = loss_value(tc.loss, &model.predict(&data.train.x)?, &data.train.y)?;
    let (test_loss, test_err) = match &data.test {
        Some(t) => {
            let p = model.predict(&t.x)?;
            (Some(loss_value(tc.loss, &p, &t.y)?), Some(semirandom::training::test_error(&p, &t.y)?))
        }
        None => (None, None),
    };
    println!(
        "epochs={} train_loss={} test_loss={} test_error={}",
        history.records.len(),
        train_loss,
        fmt_opt(test_loss),
        fmt_opt(test_err)
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let cfg = ConfigFile::load(a.config.as_deref(), &keys(&[EVAL_KEYS, DATA_KEYS]))?;
    let path = cfg.get(a.model.clone(), "model")?.ok_or_else(|| usage("--model is required"))?;
    let file = ModelFile::load(&path)?;
    let model = file.to_model()?;
    let seed = cfg.or(a.seed, "seed", file.spec.seed)?;
    let task = cfg.or(a.data.task, "task", Task::Sine)?;
    let arch = model.arch().clone();
    let mut ds = match task {
        Task::Sine => {
            let split = parse_split(&cfg.or(a.split.clone(), "split", "test".to_owned())?)?;
            let n = cfg.or(a.data.n_test, "n-test", SINE_POINTS)?;
            gen_sine_split(n.max(1), seed, split)
        }
        Task::Libsvm => {
            let p = cfg.get(a.data.data.clone(), "data")?.ok_or_else(|| usage("--data is required"))?;
            load_libsvm_with(
                &p,
                &LibsvmOptions {
                    dim: Some(arch.input_dim),
                    labels: file.labels.clone(),
                    split: Split::Test,
                },
            )?
        }
        Task::Csv => {
            let p = cfg.get(a.data.data.clone(), "data")?.ok_or_else(|| usage("--data is required"))?;
            let target = csv_target(&p, cfg.get(a.data.target_column, "target-column")?)?;
            load_csv(&p, target)?
        }
    };
    if let Some(stats) = &file.normalization {
        ds = stats.apply(&ds)?;
    }
    if ds.dim() != arch.input_dim || ds.outputs() != arch.outputs {
        return Err(usage(format!("data does not fit model {arch}")));
    }
    let preds = model.predict(&ds.x)?;
    let mse = mean_squared_error(&preds, &ds.y)?;
    let mut line = format!("samples={} mse={}", ds.len(), mse);
    if arch.outputs > 1 {
        let _ = write!(line, " error_rate={}", error_rate(&preds, &ds.y)?);
    }
    println!("{line}");
    if let Some(out) = cfg.get(a.predictions.clone(), "predictions")? {
        let mut text: String = (1..=preds.cols()).map(|j| format!("yhat{j}")).collect::<Vec<_>>().join(",");
        text.push('\n');
        for i in 0..preds.rows() {
            let row: Vec<String> = preds.row(i).iter().map(|v| v.to_string()).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        write_artifact(&out, &text)?;
    }
    Ok(())
}

pub const ORACLE_HEADER: &str = "instance_id,m,d,n,s,global_min_loss,gd_final_loss,rel_gap,converged";

/// Runs `f(0..n)` on all cores, returning results in index order.
fn parallel_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism().map_or(1, |t| t.get()).min(n.max(1));
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<(usize, &mut [Option<T>])> = {
            let size = n.div_ceil(threads).max(1);
            slots.chunks_mut(size).enumerate().map(|(k, c)| (k * size, c)).collect()
        };
        for (start, chunk) in chunks {
            let f = &f;
            scope.spawn(move || {
                for (off, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(f(start + off));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("filled")).collect()
}

fn check_fraction(name: &str, passed: usize, total: usize, threshold: f64) -> anyhow::Result<()> {
    let rate = if total == 0 { 1.0 } else { passed as f64 / total as f64 };
    println!("{name}: {passed}/{total} passed (rate {rate})");
    if rate < threshold {
        return Err(Failure::Threshold(format!("{name} rate {rate} below threshold {threshold}")).into());
    }
    Ok(())
}

fn cmd_oracle_check(a: OracleArgs) -> anyhow::Result<()> {
    let cfg = ConfigFile::load(a.config.as_deref(), &keys(&[ORACLE_KEYS]))?;
    let n = cfg.or(a.instances, "instances", 50)?;
    let threshold = cfg.or(a.threshold, "threshold", 0.9)?;
    let seed = cfg.or(a.seed, "seed", 0)?;
    let mut lc = LandscapeConfig::default();
    lc.max_iters = cfg.or(a.max_iters, "max-iters", lc.max_iters)?;
    let out = cfg.or(a.out.clone(), "out", PathBuf::from("oracle_check.csv"))?;

    let reports = parallel_map(n, |i| {
        let inst = LandscapeInstance::random(seed, i);
        verify_landscape(&inst, &lc).map(|r| (inst, r))
    });
    let mut text = String::from(ORACLE_HEADER);
    text.push('\n');
    let mut passed = 0;
    for res in reports {
        let (inst, r) = res?;
        passed += usize::from(r.converged);
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            inst.id,
            inst.m(),
            inst.d(),
            inst.n(),
            inst.s,
            r.global_min_loss,
            r.final_loss,
            r.rel_gap,
            r.converged
        );
    }
    write_artifact(&out, &text)?;
    check_fraction("oracle-check", passed, n, threshold)
}

/// A random small model with a gate-safe batch.
pub struct GradcheckCase {
    pub label: String,
    pub model: Model,
    pub x: Matrix,
    pub y: Matrix,
    pub loss: Loss,
    pub bank: usize,
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn gradcheck_case(seed: u64, id: usize, max_depth: usize) -> anyhow::Result<GradcheckCase> {
    let mut rng = stream(seed, "gradcheck", id as u64);
    let units = [UnitKind::Lsr, UnitKind::Ssr, UnitKind::Rf, UnitKind::LsrIe, UnitKind::Relu];
    let unit = units[rng.random_range(0..units.len())];
    let depth = 1 + rng.random_range(0..max_depth.max(1));
    let d = 1 + rng.random_range(0..3);
    let c = 1 + rng.random_range(0..2);
    let m = 1 + rng.random_range(0..5);
    let widths: Vec<usize> = (0..depth).map(|_| 1 + rng.random_range(0..4)).collect();
    let arch = Architecture::new(d, widths, c)?;
    let s = match unit {
        UnitKind::Relu => ActivationOrder(0),
        _ => ActivationOrder(rng.random_range(0..2) as u32),
    };
    let banks = if unit == UnitKind::LsrIe { 1 + rng.random_range(0..3) } else { 1 };
    let spec = ModelSpec {
        unit,
        arch: arch.clone(),
        s,
        banks,
        radius: (d as f64).sqrt(),
        init: WeightInit::Scaled(0.7),
        seed: seed.wrapping_mul(1_000_003).wrapping_add(id as u64),
    };
    let model = Model::build(&spec)?;
    let loss = if c > 1 && rng.random_range(0..2) == 1 { Loss::SoftmaxCrossEntropy } else { Loss::Squared };
    let bank = rng.random_range(0..banks);
    let y = match loss {
        Loss::Squared => Matrix::from_fn(m, c, |_, _| uniform(&mut rng, -1.0, 1.0)),
        Loss::SoftmaxCrossEntropy => {
            let hot: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
            Matrix::from_fn(m, c, |i, j| if hot[i] == j { 1.0 } else { 0.0 })
        }
    };
    for _ in 0..10_000 {
        let x = Matrix::from_fn(m, d, |_, _| uniform(&mut rng, -1.0, 1.0));
        if model.min_abs_preactivation(&x)? >= 1e-3 {
            return Ok(GradcheckCase {
                label: format!("{unit}:{arch}:s{s}"),
                model,
                x,
                y,
                loss,
                bank,
            });
        }
    }
    Err(anyhow::anyhow!("no gate-safe batch found for case {id}"))
}

fn cmd_gradcheck(a: GradcheckArgs) -> anyhow::Result<()> {
    let cfg = ConfigFile::load(a.config.as_deref(), &keys(&[GRADCHECK_KEYS]))?;
    let n = cfg.or(a.models, "models", 100)?;
    let max_depth = cfg.or(a.max_depth, "max-depth", 3)?;
    let h = cfg.or(a.step, "step", 1e-6)?;
    let tol = cfg.or(a.tol, "tol", 1e-4)?;
    let seed = cfg.or(a.seed, "seed", 0)?;
    if max_depth == 0 {
        return Err(usage("max-depth must be at least 1"));
    }
    let mut text = String::from("model_id,model,loss,params,rel_error,passed\n");
    let mut passed = 0;
    for id in 0..n {
        let case = gradcheck_case(seed, id, max_depth)?;
        let r = gradcheck(&case.model, &case.x, &case.y, case.loss, case.bank, h)?;
        let ok = r.rel_error <= tol;
        passed += usize::from(ok);
        let loss = match case.loss {
            Loss::Squared => "squared",
            Loss::SoftmaxCrossEntropy => "softmax-cross-entropy",
        };
        let _ = writeln!(text, "{id},{},{loss},{},{},{ok}", case.label, r.params, r.rel_error);
    }
    if let Some(out) = cfg.get(a.out.clone(), "out")? {
        write_artifact(&out, &text)?;
    }
    check_fraction("gradcheck", passed, n, 1.0)
}

fn cmd_pathcheck(a: PathcheckArgs) -> anyhow::Result<()> {
    let cfg = ConfigFile::load(a.config.as_deref(), &keys(&[PATHCHECK_KEYS]))?;
    let n = cfg.or(a.nets, "nets", 100)?;
    let max_depth = cfg.or(a.max_depth, "max-depth", 3)?;
    let max_width = cfg.or(a.max_width, "max-width", 4)?;
    let max_dim = cfg.or(a.max_dim, "max-dim", 3)?;
    let tol = cfg.or(a.tol, "tol", 1e-10)?;
    let seed = cfg.or(a.seed, "seed", 0)?;
    if max_depth == 0 || max_width == 0 || max_dim == 0 {
        return Err(usage("max-depth, max-width and max-dim must be at least 1"));
    }
    let mut text = String::from("net_id,arch,s,forward,inner,rel_error,passed\n");
    let mut passed = 0;
    for id in 0..n {
        let mut rng = stream(seed, "pathcheck", id as u64);
        let depth = 1 + rng.random_range(0..max_depth);
        let d = 1 + rng.random_range(0..max_dim);
        let widths: Vec<usize> = (0..depth).map(|_| 1 + rng.random_range(0..max_width)).collect();
        let arch = Architecture::new(d, widths, 1)?;
        let s = ActivationOrder(rng.random_range(0..3) as u32);
        let model = DeepModel::sample(&arch, s, (d as f64).sqrt(), WeightInit::Scaled(1.0), rng.random::<u64>())?;
        let x: Vec<f64> = (0..d).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let f = model.forward(&x)?[0];
        let p = path_expand(&model, &x)?;
        let inner = p.inner();
        let scale: f64 = p.sigma.iter().zip(&p.weights).map(|(a, b)| (a * b).abs()).sum();
        let rel = if scale == 0.0 { (f - inner).abs() } else { (f - inner).abs() / scale };
        let ok = rel <= tol;
        passed += usize::from(ok);
        let _ = writeln!(text, "{id},{arch},{s},{f},{inner},{rel},{ok}");
    }
    if let Some(out) = cfg.get(a.out.clone(), "out")? {
        write_artifact(&out, &text)?;
    }
    check_fraction("pathcheck", passed, n, 1.0)
}

fn parse_widths(raw: &str) -> anyhow::Result<Vec<usize>> {
    raw.split(',')
        .map(|w| parse::<usize>(w.trim(), "width"))
        .collect()
}

fn cmd_bounds(a: BoundsArgs) -> anyhow::Result<()> {
    let cfg = ConfigFile::load(a.config.as_deref(), &keys(&[BOUNDS_KEYS]))?;
    let inp = BoundInputs {
        c_y: cfg.or(a.c_y, "c-y", 1.0)?,
        c_w: cfg.or(a.c_w, "c-w", 1.0)?,
        c_sigma_x: cfg.or(a.c_sigma_x, "c-sigma-x", 1.0)?,
        m: cfg.or(a.m, "m", 100)?,
        delta: cfg.or(a.delta, "delta", 1.0)?,
        c: cfg.or(a.c, "c", 1.0)?,
        d: cfg.or(a.d, "d", 1)?,
        widths: parse_widths(&cfg.or(a.widths.clone(), "widths", "1".to_owned())?)?,
    };
    let json = cfg.switch(a.json, "json")?;
    let bad = |e: semirandom::Error| usage(e.to_string());
    let gen = generalization_bound(&inp).map_err(bad)?;
    let approx = approx_lower_bound(inp.c, inp.d, &inp.widths).map_err(bad)?;
    let last = *inp.widths.last().expect("non-empty widths");
    let rf = random_feature_lower_bound(inp.c, inp.d, last).map_err(bad)?;
    let (q0, q1) = importance_constants(inp.d, inp.c_w).map_err(bad)?;
    let sweep: Vec<(usize, f64)> = (1..=inp.widths.len())
        .map(|h| approx_lower_bound(inp.c, inp.d, &inp.widths[..h]).map(|v| (h, v)))
        .collect::<Result<_, _>>()
        .map_err(bad)?;
    let risk = match cfg.get(a.residual, "residual")? {
        Some(r) => Some(expected_risk_bound(r, &inp).map_err(bad)?),
        None => None,
    };

    if json {
        let value = serde_json::json!({
            "inputs": inp,
            "c_yhat": inp.c_yhat(),
            "generalization_bound": gen,
            "approx_lower_bound": approx,
            "random_feature_lower_bound": rf,
            "q0": q0,
            "q1": q1,
            "depth_sweep": sweep.iter().map(|(h, v)| serde_json::json!({"depth": h, "approx_lower_bound": v})).collect::<Vec<_>>(),
            "expected_risk_bound": risk,
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
        return Ok(());
    }
    println!("generalization_bound\t{gen}");
    println!("approx_lower_bound\t{approx}");
    println!("random_feature_lower_bound\t{rf}");
    println!("q0\t{q0}");
    println!("q1\t{q1}");
    if let Some(r) = risk {
        println!("expected_risk_bound\t{}", r.total);
    }
    println!("depth\tapprox_lower_bound");
    for (h, v) in sweep {
        println!("{h}\t{v}");
    }
    Ok(())
}

fn cmd_gen_data(a: GenDataArgs) -> anyhow::Result<()> {
    let cfg = ConfigFile::load(a.config.as_deref(), &keys(&[GEN_KEYS]))?;
    let m = cfg.or(a.m, "m", SINE_POINTS)?;
    let split = parse_split(&cfg.or(a.split.clone(), "split", "train".to_owned())?)?;
    let seed = cfg.or(a.seed, "seed", 0)?;
    if m == 0 {
        return Err(usage("m must be at least 1"));
    }
    let text = to_csv_string(&gen_sine_split(m, seed, split))?;
    match cfg.get(a.out.clone(), "out")? {
        Some(p) => write_artifact(&p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
