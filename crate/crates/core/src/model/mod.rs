//! Scenario configuration, channel generation and rate/MSE evaluation.

pub mod channel;
pub mod config;
pub mod metrics;
pub mod state;

pub use channel::{generate_channels, path_gain, planar_steering, realization, steering_vector, ChannelSet};
pub use config::{dbm_to_watts, DasPlacement, SystemConfig};
pub use metrics::{
    das_effective_channel, effective_channel, effective_channel_of, lemma1_identity_check, mmse,
    mse_all, mse_e_k, receive_power, sinr_and_rate, wmmse_objective, wsr, wsr_of, CRow,
    EffectiveChannel,
};
pub use state::{check_assignment, support, SolverState};
