//! Fixtures shared by the kernel benchmarks.

use semirandom::data::gen_sine;
use semirandom::{ActivationOrder, Architecture, Dataset, DeepModel, WeightInit};

/// A sine dataset of `m` samples with fixed seed.
pub fn sine(m: usize) -> Dataset {
    gen_sine(m, 0)
}

/// A deep LSR model `1-w-…-w-1` with `depth` hidden layers, sized to `ds`.
pub fn deep_lsr(ds: &Dataset, width: usize, depth: usize) -> DeepModel {
    let arch = Architecture::new(1, vec![width; depth], 1).expect("valid architecture");
    DeepModel::sample(&arch, ActivationOrder(0), ds.radius, WeightInit::Scaled(0.1), 0).expect("valid model")
}
