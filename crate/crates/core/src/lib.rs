//! Coalescing stochastic flows, their white-noise functionals and the
//! Krylov-Veretennikov chaos expansion.

pub mod error;
pub mod flow;
pub mod harness;
pub mod kv;
pub mod partitions;
pub mod scalar;
pub mod noise;
pub mod semigroup;

pub use error::{Error, Result};
pub use harness::{convergence_report, run, ConvergenceReport, ExperimentConfig, ResultRow};
pub use kv::{
    scenario_decomposition, scenario_semigroup, stopped_expansion, stopped_wiener_series, theorem11_expansion,
    theorem11_series, theorem31_series, ChaosExpansion, ExpansionSpec, Matrix, NPointOptions,
};
pub use partitions::{
    block_of, enumerate_chains, enumerate_chains_from, follows, maximal_chains, validate_lambda, Block, ChainClass,
    EnumerationBudget, IntervalPartition, LambdaRule, PartitionChain,
};
pub use flow::{
    detect_crossing, scenario_indicator, simulate_batch, simulate_blocks, simulate_lambda, simulate_sequential,
    write_scenarios_csv, FlowOutcome, FlowRule, ParticleSystem, ScenarioRecord,
};
pub use noise::{
    covariance, fourier_wiener_pairing, iterated_integral, replicate, sample_bundle, stochastic_exponent,
    stochastic_exponent_of, KernelShape, RngStreams, SimplexKernel, Summary, WienerBundle, MAX_PAIRING_ORDER,
};
pub use scalar::{normal_cdf, normal_pdf, ExactSum, Real};
pub use semigroup::{
    apply_semigroup, block_derivative, derivative, evaluate_semigroup, kernel_pipeline, kernel_pipeline_split,
    semigroup_weights, Axis, Coefficient, Grid, GridFunction, Operator, SemigroupSpec,
};

pub type Axis64 = Axis<f64>;
pub type Grid64 = Grid<f64>;
pub type GridFunction64 = GridFunction<f64>;
pub type LambdaRule64 = LambdaRule<f64>;
pub type SemigroupSpec64 = SemigroupSpec<f64>;
pub type SimplexKernel64 = SimplexKernel<f64>;
pub type WienerBundle64 = WienerBundle<f64>;
pub type ChaosExpansion64 = kv::ChaosExpansion<f64>;
pub type Matrix64 = kv::Matrix<f64>;
pub type NPointOptions64 = kv::NPointOptions<f64>;
