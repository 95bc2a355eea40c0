//! Small experiment drivers shared by the CLI and the acceptance suite.

use crate::data::{gen_sine_split, Dataset, Split};
use crate::error::{Error, Result};
use crate::network::{Architecture, Model, ModelSpec, Network, UnitKind, WeightInit};
use crate::training::{mean_squared_error, train, TrainConfig, TrainHistory};

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: Model,
    pub history: TrainHistory,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
}

/// Builds the model described by `spec` and trains it.
pub fn run(spec: &ModelSpec, train_set: &Dataset, test_set: Option<&Dataset>, config: &TrainConfig) -> Result<RunResult> {
    let mut model = Model::build(spec)?;
    let history = train(&mut model, train_set, test_set, config)?;
    let train_mse = mean_squared_error(&model.predict(&train_set.x)?, &train_set.y)?;
    let test_mse = match test_set {
        Some(t) => Some(mean_squared_error(&model.predict(&t.x)?, &t.y)?),
        None => None,
    };
    Ok(RunResult {
        model,
        history,
        train_mse,
        test_mse,
    })
}

/// Sine task at one seed: data, gates and weights all derive from `seed`.
#[derive(Debug, Clone)]
pub struct SineTask {
    pub unit: UnitKind,
    pub arch: Architecture,
    pub n_train: usize,
    pub n_test: usize,
    pub init: WeightInit,
    pub config: TrainConfig,
}

impl SineTask {
    /// Sine protocol defaults: init scale 0.1, 5000 points per split.
    pub fn new(unit: UnitKind, arch: Architecture) -> Self {
        SineTask {
            unit,
            arch,
            n_train: crate::data::SINE_POINTS,
            n_test: crate::data::SINE_POINTS,
            init: WeightInit::Scaled(0.1),
            config: TrainConfig::sine(),
        }
    }

    pub fn data(&self, seed: u64) -> (Dataset, Dataset) {
        (
            gen_sine_split(self.n_train, seed, Split::Train),
            gen_sine_split(self.n_test, seed, Split::Test),
        )
    }

    pub fn spec(&self, seed: u64, radius: f64) -> ModelSpec {
        ModelSpec {
            unit: self.unit,
            arch: self.arch.clone(),
            s: self.unit.default_order(),
            banks: 1,
            radius,
            init: self.init,
            seed,
        }
    }

    pub fn run(&self, seed: u64) -> Result<RunResult> {
        let (tr, te) = self.data(seed);
        let mut config = self.config.clone();
        config.seed = seed;
        run(&self.spec(seed, tr.sampling_radius()), &tr, Some(&te), &config)
    }
}

/// Median of a non-empty slice; the mean of the middle pair for even
/// lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return Err(Error::param("median needs non-empty, NaN-free input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
