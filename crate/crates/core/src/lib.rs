//! Semi-random units: activations `σ_s(xᵀr)·(xᵀw)` whose gate direction `r`
//! is random and frozen while `w` is trained.
//!
//! The crate provides shallow and deep semi-random networks with their
//! baselines (ReLU, random features, an implicit ensemble of gate banks),
//! momentum SGD training, a least-squares oracle for the global optimum of
//! shallow models, path-tensor expansion of deep models, and calculators
//! for the generalization and approximation bounds.

pub mod bounds;
pub mod data;
pub mod error;
pub mod experiments;
pub mod features;
pub mod network;
pub mod numerics;
pub mod oracle;
pub mod training;

pub use data::{Dataset, Split};
pub use error::{Error, Result};
pub use features::{ActivationOrder, RandomDirection};
pub use network::{
    Architecture, DeepModel, GateStack, LsrIeModel, Model, ModelFile, ModelSpec, Network,
    RandomFeatureModel, ReluNet, ShallowModel, UnitKind, WeightInit, Weights,
};
pub use numerics::Matrix;
pub use training::{Loss, TrainConfig, TrainHistory, Trainable};
