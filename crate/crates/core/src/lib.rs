//! Rare-event Monte Carlo for exceedance and boundary-crossing probabilities of
//! i.i.d. and finite-state Markov random walks.
//!
//! The estimators sample from mixtures of exponentially tilted measures and
//! weight each run by the exact likelihood ratio of the mixture. The crate is
//! organised bottom-up:
//!
//! * [`exp_family`]: cumulant generating functions, tilts and rate functions
//!   for i.i.d. Gaussian and lattice increments.
//! * [`markov_additive`]: Perron eigen-solutions of tilted kernels for finite
//!   Markov additive models.
//! * [`model`]: a single interface over both model kinds, used by the samplers.
//! * [`mixing`]: grid and finite mixtures of tilted measures and their inverse
//!   likelihood ratios.
//! * [`estimators`]: the simulation engine, all estimators, and an exact
//!   enumeration oracle.
//! * [`regeneration`]: regeneration times at an atom, the excursion
//!   representation of the eigenfunction and the modified likelihood-ratio
//!   martingale.

pub mod error;
pub mod estimators;
pub mod events;
pub mod exp_family;
pub mod markov_additive;
pub mod mixing;
pub mod model;
pub mod regeneration;
pub mod rng;

pub use error::{Error, Result};
pub use estimators::{EstimateReport, TrajectoryRecord};
pub use events::{BoundaryEvent, FirstPassageBoundary, GFunction, TailEvent};
pub use exp_family::{IidFamily, IidModel, TiltPoint};
pub use markov_additive::{Emission, InitialLaw, MarkovAdditiveModel, PerronSolution};
pub use mixing::{Component, MixtureFlavor, MixtureSpec};
pub use model::{Model, Tilt};
