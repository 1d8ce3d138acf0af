//! Spectral-Galerkin simulation of the stochastic 2-D Navier-Stokes equations with
//! artificial compressibility, `du + [Au + B̂(u) + ∇p]dt = f dt + Σ g_k dw_k`,
//! `ε dp + Div u dt = 0`, on the unit square, together with numerical checks of the
//! energy identities, a-priori bounds, uniqueness estimate and `ε → 0` behaviour.

pub mod diagnostics;
pub mod eps_limit;
pub mod error;
pub mod forcing;
pub mod integrator;
pub mod io;
pub mod oracle;
pub mod operators;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{PressureField, Space, VelocityField};
pub use forcing::{
    DeterministicForce, ForceSpec, ModeAmplitude, NoiseModel, NoiseSpec, SeedPath, WienerIncrement,
};
pub use integrator::{
    EnergyLedgerEntry, FieldSpec, InitialSpec, PathRecord, PathRow, Problem, Solver, SolverConfig,
    State,
};
