//! Position estimation for GPS-denied UAV flight.
//!
//! A spectrally normalized memory neuron network predicts the next position
//! from rotor speeds, orientation and the previous position. Predictions are
//! converted to geodetic coordinates and fused with inertial data in a small
//! position/velocity EKF. Synthetic flights come from a rigid-body quadrotor
//! simulator.

pub mod config;
pub mod fixtures;
pub mod flightlog;
pub mod fusion;
pub mod geodesy;
pub mod mnn;
pub mod par;
pub mod trainer;
pub mod uav_sim;

pub use mnn::{Activation, InputVector, MnnError, MnnLayer, MnnNetwork};
pub use par::Execution;
