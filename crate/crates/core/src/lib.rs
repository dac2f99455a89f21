//! Timesteppers for stiff Markov-chain ion-channel models: forward Euler,
//! matrix Rush–Larsen over tabulated eigendecompositions, and a hybrid
//! operator splitting with closed-form fast substeps, hosted in a whole-cell
//! ventricular action-potential model.
//!
//! The numerical kernels are generic over [`Real`]; the aliases below fix
//! them to `f64`, which is what the cell model and the CLI use.

pub mod bench;
pub mod cell;
pub mod compare;
pub mod eig;
pub mod error_analysis;
pub mod io;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod solvers;
pub mod tables;

pub use cell::{simulate, CellParams, CellState, Protocol, Trace};
pub use scalar::Real;
pub use solvers::{Method, MethodConfig};
pub use tables::VoltageGrid;

pub type Matrix = model::Mat9<f64>;
pub type Occupancy = model::StateOccupancy<f64>;
pub type Rates = model::RateSet<f64>;
pub type Split = model::SplitGenerators<f64>;
pub type Eigen = eig::EigenDecomposition<f64>;
pub type Table = tables::EigenTable<f64>;
pub type Stepper = solvers::ChannelStepper<f64>;
pub type Config = solvers::MethodConfig<f64>;
pub type Coefficients = error_analysis::ErrorCoefficients<f64>;
