//! Simulation toolkit for functionals of hidden Markov models.
//!
//! A hidden Markov model over a finite state space can be driven by a single
//! vector of independent `(state, symbol)` instructions: entry 0 picks the
//! first hidden state and emission, and each later entry holds the transition
//! taken at one step from one possible state. Replaying the instructions
//! ([`hmm::reconstruct`]) yields the usual chain, while resampling individual
//! entries ([`hmm::perturb`]) gives exact single-coordinate perturbations of
//! an otherwise dependent process.
//!
//! On top of that representation the crate provides:
//!
//! * difference operators and Monte Carlo estimators for the variance and
//!   moment terms of normal-approximation bounds ([`perturb`]),
//! * empirical summaries, the exact Kolmogorov distance to the standard
//!   normal, and tail/slope diagnostics ([`stats`]),
//! * three example functionals from stochastic geometry and combinatorics:
//!   germ-grain coverage ([`germ_grain`]), Voronoi volume approximation
//!   ([`voronoi`]) and the occupancy count ([`occupancy`]).
//!
//! Replicate-level execution is data-parallel via rayon when the default
//! `parallel` feature is enabled; disabling it falls back to a sequential
//! driver with bit-identical output.

pub mod exec;
pub mod germ_grain;
pub mod hmm;
pub mod measure;
pub mod occupancy;
pub mod perturb;
pub mod rng;
pub mod spatial;
pub mod stats;
pub mod voronoi;
