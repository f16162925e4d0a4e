//! Truncated Krylov-Veretennikov / Itô-Wiener expansions and their verifiers.

pub mod engine;
pub mod flat;
pub mod lie;
pub mod npoint;
pub mod stopped;

pub use engine::{build_pipeline_expansion, CacheOptions, ChaosExpansion, MAX_ORDER};
pub use flat::{theorem11_expansion, theorem11_series, ExpansionSpec, Generator};
pub use lie::{euler_path, extract_driver, lie_series, Matrix};
pub use npoint::{
    first_order_coefficients, scenario_decomposition, scenario_semigroup, strict_chains, structural_terms,
    theorem31_expansion, theorem31_series, CoefficientEstimate, NPointExpansion, NPointOptions, PointFn,
    ScenarioDecomposition, ScenarioSemigroupEstimate, StructuralTerm,
};
pub use stopped::{hitting_probability, stopped_endpoint, stopped_expansion, stopped_wiener_series};
