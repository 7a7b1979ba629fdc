//! Fermi–Ulam ping-pong driven by a quasi-periodic plate `p(t) = P(ω + ν t)`
//! with `P` a trigonometric polynomial on the torus `T^N`.
//!
//! The crate provides the successor maps in `(t, v)`, `(t, E)` and skew-product
//! form, the cross-section and Haar-measure machinery of the torus flow, the
//! adiabatic invariant `W = P(ω)² E` with its drift bound, and a Monte-Carlo
//! census of escaping and recurrent orbits.

// `!(x > y)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod census;
pub mod collision;
pub mod error;
pub mod export;
pub mod forcing;
pub mod invariants;
pub mod pingpong_map;
pub mod rng;
pub mod stats;
pub mod torus_flow;

pub use census::{run_census, CensusConfig, CensusReport, Classification};
pub use collision::{solve_impact_time, solve_tau, SolveResult};
pub use error::{Error, Result};
pub use forcing::{flow_advance, ForcingSpec, FrequencyVector, Jet, Mode, TimeForcing, TorusPoint};
pub use invariants::{BandFamily, DriftRecord};
pub use pingpong_map::{
    iterate, step_skew, step_te, step_tv, OrbitStatus, OrbitTrace, PhaseStateTE, PhaseStateTV, SkewState,
};
pub use rng::CounterRng;
pub use torus_flow::{CrossSection, Rectangle, SectionCoords};
