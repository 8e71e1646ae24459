//! Executable thermodynamic formalism for symbolic systems and suspension flows.
//!
//! The crate works on shift spaces (full shifts, subshifts of finite type,
//! β-shifts and S-gap shifts) with the two-sided cylinder metric
//! `d(x, y) = 2^-min{|i| : x_i != y_i}`. Every scale is dyadic, so Bowen balls
//! are coordinate windows and all separated-set suprema are finite maxima.
//!
//! Module map:
//! - [`symbolic`]: alphabets, admissibility rules, words, points, Bowen windows.
//! - [`potentials`]: potentials, Birkhoff sums, two-scale weights, variation.
//! - [`pressure`]: two-scale partition sums, pressure estimates, inequality checks.
//! - [`decomposition`]: (P, G, S) decompositions, gluing, Bowen distortion, certificates.
//! - [`equilibrium`]: transfer-operator oracle, cylinder measures, Gibbs bounds.
//! - [`expansivity`]: Γ_ε sets, h*, conditional entropy, Hamming and binomial checks.
//! - [`suspension`]: suspension flows over shifts with exact rational time.
//! - [`ldp`]: empirical measures and the level-2 large deviations upper bound.

pub mod decomposition;
pub mod equilibrium;
pub mod error;
pub mod expansivity;
pub mod interval;
pub mod ldp;
pub mod potentials;
pub mod pressure;
pub mod suspension;
pub mod symbolic;

pub use error::{Error, Result};
pub use interval::ValueInterval;
pub use symbolic::{Alphabet, AdmissibilityRule, DyadicScale, Point, ShiftSystem, Window, Word};
