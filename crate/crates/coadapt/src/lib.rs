//! Simulator and certificate checker for closed-loop co-adaptation over
//! finite alphabets.
//!
//! Two learners share a loop: an encoder side B that wants a sequence of
//! intention symbols realized, and a decoder side A that only ever sees B's
//! encodings and a scalar loss signal. The crate simulates that loop with
//! pluggable selection policies, scores it against the hindsight-best fixed
//! decoder (regret), computes the mixing coefficients that quantify how
//! dependent the intention sequence is, and evaluates a concentration-based
//! certificate: when the realized closed-loop loss plus a deviation term
//! stays strictly below the summed per-step floor of the fixed-decoder
//! comparator, the loop outperforms the comparator with probability at least
//! 1 - delta.
//!
//! Modules:
//! - [`model`]: alphabets, Markov intention processes, loss tables, function
//!   classes, sequence sampling, and the Hamming-Lipschitz constant
//! - [`mixing`]: total variation, eta coefficients, and the dependence
//!   factor M (exact Markov route plus an enumeration oracle)
//! - [`protocol`]: the episode engine, selection policies, and the hindsight
//!   comparator dynamic program
//! - [`certificate`]: per-step minimal expected losses, the deviation term,
//!   the certificate, and Monte Carlo validation of the tail bound
//! - [`config`]: TOML experiment definitions
//! - [`experiment`]: trial orchestration, sweeps, and CSV reports

pub mod certificate;
pub mod config;
pub mod error;
pub mod experiment;
pub mod mixing;
pub mod model;
pub mod protocol;
pub mod seed;

pub use certificate::{
    check_certificate, deviation_term, eps_floor_schedule, eps_schedule, eps_schedule_along, eps_t,
    exact_expected_psi, min_predictive_comparator_loss, validate_tail_bound, BoundValidationReport,
    Certificate, EpsSchedule,
};
pub use config::{load_config, parse_config, EpsConditioning, ExperimentConfig, PolicySpec};
pub use error::{Error, FieldError, Result};
pub use experiment::{
    run_experiment, run_trial, sweep, ExperimentReport, SweepParameter, SweepReport, TrialRecord,
};
pub use mixing::{
    eta_bar_bruteforce, eta_bar_markov, mixing_profile, tv_distance, MixingMethod, MixingProfile,
};
pub use model::{
    compose, hamming_distance, lipschitz_constant, sample_intentions, Alphabet, ClassKind,
    FeatureAlphabet, FunctionClass, LossMatrix, MarkovIntentionProcess,
};
pub use protocol::{
    best_comparator_loss, best_static_comparator_loss, comparator_trajectory, regret, run_episode,
    trajectory_loss, EpisodeSetup, Policy, PolicyRule, Side, Trajectory,
};
pub use seed::trial_seed;
