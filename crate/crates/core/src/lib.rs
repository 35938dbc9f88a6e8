//! Extinction probabilities of multitype Galton-Watson processes with
//! countably many types: finite truncations, fixed-point solvers, spectral
//! criteria and coupled pathwise simulation.

pub mod error;
pub mod figures;
pub mod mmatrix;
pub mod model_io;
pub mod progeny;
pub mod sim;
pub mod solver;
pub mod spectral;
pub mod truncation;
pub mod zoo;

pub use error::{ModelError, SimError, SolveError, SpectralError};
pub use progeny::{
    mean_row, offspring_sample, pgf_eval, truncated_poisson, Event, LawCache, ProgenyModel,
    SparseOffspring, TableModel, TailRule, TypeIndex, TypeLaw,
};
