//! Distributions, kernels and normalizing sequences.

pub mod distribution;
pub mod kernel;
pub mod normalizer;
pub mod regularity;

pub use distribution::{product_measure_sample, Builtin, Distribution, SignLaw};
pub use kernel::{parse_kernel, Constant, FnKernel, IndicatorThreshold, Kernel, Product, SectionMoment, SumProduct};
pub use normalizer::{FnNormalizer, Normalizer, NormalizingSequence};
pub use regularity::{certify_regularity, ConditionCheck, RegularityReport};
