//! Limits of symmetric rank-one matrix estimation under element-wise
//! Gaussian noise: the replica-symmetric potential and its thresholds, state
//! evolution (plain and spatially coupled), AMP on sampled instances, channel
//! universality reductions, and an exhaustive small-n posterior used to
//! validate the identities everything else relies on.
//!
//! The model observes `w_ij = s_i s_j / sqrt(n) + sqrt(Delta) z_ij` with
//! `s_i` drawn i.i.d. from a discrete bounded prior. A single scalar
//! quantity, the per-coordinate MSE `E`, drives everything: the effective
//! scalar channel has `snr = (v - E)/Delta`, state evolution iterates
//! `E <- mmse(snr)`, and the potential `i_RS(E; Delta)` encodes both the
//! asymptotic mutual information (its minimum) and the MMSE (its minimizer).

pub mod amp;
pub mod channel;
pub mod exact_oracle;
pub mod potential;
pub mod prior;
pub mod quadrature;
pub mod spatial_coupling;
pub mod state_evolution;

pub use amp::{run_amp, run_coupled_amp, sample_coupled_instance, sample_instance};
pub use channel::OutputChannel;
pub use potential::{delta_amp, delta_rs, scalar_mutual_information, ScalarModel};
pub use prior::{DiscretePrior, EffectiveNoise};
pub use spatial_coupling::{triangle_coupling, CoupledProfile, CouplingMatrix, PinMode};
pub use state_evolution::{e_good, in_basin, run_se, t_u, SeOptions, SeTrace};
