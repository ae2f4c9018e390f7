pub mod artifact;
pub mod config;
pub mod fourier;
pub mod iqae;
pub mod ltd;
pub mod pipeline;
pub mod quad;
pub mod selftest;
pub mod statevec;
pub mod vqc;
