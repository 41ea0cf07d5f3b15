//! Null-control solvers for the 1D heat equation and for reaction–diffusion
//! systems coupled through a power of the first component.
//!
//! The central piece is [`rum`], a penalized duality solver posed in the
//! reflexive space `L^q`, `q = (n+1)/n`, whose optimal control is an exact
//! `n`-th power of a smooth grid function. [`strategy`] chains two such solves
//! into the global two-phase pipelines and [`trajectory`] builds the
//! return-method reference trajectory.

pub mod carleman;
pub mod error;
pub mod grid;
pub mod heat;
pub mod powers;
pub mod rum;
pub mod strategy;
pub mod trajectory;

pub use carleman::{ExponentTable, WeightSystem};
pub use error::{Error, Result};
pub use grid::{Cutoff, Grids, Interval, SpaceTimeField, SpatialGrid, TimeGrid};
pub use heat::{HeatSolver, ParabolicOperator, Scalar, Scheme};
pub use num_complex::Complex64;
pub use rum::{RumIterate, RumProblem, RumResult};
pub use strategy::{PhaseReport, PowerSystemConfig, StrategyReport};
pub use trajectory::{NonlinearitySpec, TrajectoryResult};
