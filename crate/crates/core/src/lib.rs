//! Full-history recursive multilevel Picard (MLP) approximations for systems
//! of semilinear parabolic PDEs
//!
//! ```text
//! ∂u/∂t + ½ Tr(σσ* Hess u) + <μ, ∇u> + f(x, u) = 0,   u(T, ·) = g,
//! ```
//!
//! together with the four built-in benchmark problems and an experiment
//! harness that measures relative L²-errors, randomness consumption and
//! runtime.

pub mod error;
pub mod estimator;
pub mod flows;
pub mod harness;
pub mod model;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
pub use estimator::{mlp_estimate, predicted_flow_samples, predicted_uniforms, CostCounters, Estimate, Mlp};
pub use model::{FlowSpec, MlpQuery, SemilinearProblem, TruncationRadius};
pub use problems::{builtin_problem, default_query, ExampleName, FixtureTable, Provenance, ReferenceSolution};
pub use rng::{derive_key, MultiIndexKey, StreamKey, StreamTag};
