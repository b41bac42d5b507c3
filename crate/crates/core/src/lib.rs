//! Simulation of Hong-Ou-Mandel-type two-photon interference in a
//! polarization-based Franson interferometer.
//!
//! The crate is layered bottom-up:
//!
//! * [`spectral`] models the biphoton spectral density and its correlation
//!   envelope (closed form and quadrature).
//! * [`optics`] holds the Jones-calculus elements and enumerates the
//!   two-photon detection amplitudes of the PBS-based circuit.
//! * [`coincidence`] turns amplitudes into coincidence probabilities and
//!   carries the factorized closed-form fringe law as an oracle.
//! * [`scenarios`] maps translation-stage positions onto arm delays and
//!   packages the reference experiments as presets.
//! * [`counts`] samples Poissonian coincidence counts and estimates
//!   visibility, beat frequency and envelope position.

pub mod coincidence;
pub mod counts;
pub mod optics;
pub mod scenarios;
pub mod spectral;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
