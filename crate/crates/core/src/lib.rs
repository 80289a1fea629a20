//! Discrete transfer operators built from Lagrangian trajectories.
//!
//! The pipeline runs from a box covering of the domain ([`grid`]) through
//! transition-pair extraction ([`ingest`]) and Ulam estimation ([`ulam`]) to
//! the absorbing chain with cemetery and beaching states ([`absorb`]). On
//! top of that sit spectral analysis ([`spectral`]), Bayesian source
//! inversion from beaching times ([`bayes`]) and fixed-length most probable
//! paths ([`paths`]). [`synth`] generates drifters from known kernels and
//! [`serial`] reads and writes matrices bit-exactly.
//!
//! State indices are 0-based. For `N` domain states and `M` targets the
//! augmented chain uses `N` for the cemetery and `N + m` for target `m`.

pub mod absorb;
pub mod bayes;
pub mod grid;
pub mod ingest;
pub mod paths;
pub mod serial;
pub mod sparse;
pub mod spectral;
pub mod synth;
pub mod ulam;

pub use absorb::{add_beaching, add_cemetery, augment, AbsorbError, AugmentedChain};
pub use bayes::{BayesError, ChainSchedule, InferOptions, Observation, Posterior, PosteriorResult};
pub use grid::{build_grid, Bounds, BoxId, GridConfig, GridCovering, GridError, StateRoles, WetMask};
pub use ingest::{Epoch, Season, SeasonCalendar, TrajectorySet, TransitionPair};
pub use paths::{PathError, PathResult, PathSearch};
pub use sparse::{MatrixError, SparseMatrix};
pub use spectral::{BasinResult, EigenOptions, EigenPair, EigenResult, Retention, SpectralError};
pub use ulam::{MatrixLabel, TransitionMatrix, UlamError};
