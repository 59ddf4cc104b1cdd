//! Stochastic reliability instances and their plumbing: scenario sampling
//! and persistence, the empirical AVaR oracle, the gas-network SAA chance
//! constraint, the cantilever beam with a buffered-probability constraint,
//! and the grid-search baseline.

pub mod avar;
pub mod beam;
pub mod gas;
pub mod grid;
pub mod scenario;

pub use avar::empirical_avar;
pub use beam::{
    build_buffered_instance, build_cantilever_from_scenarios, build_cantilever_instance,
    BeamInstance, BeamSpec,
};
pub use gas::{
    build_gas_from_scenarios, build_gas_instance, sigmoid, sigmoid_deriv, GasInstance, GasTree,
};
pub use grid::{grid_search, GridOutcome};
pub use scenario::{
    load_scenarios, sample_scenarios, save_scenarios, ColumnSpec, DistributionSpec, ScaleKind,
    ScenarioSet, Storage,
};
