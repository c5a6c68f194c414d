//! Trial orchestration: runs seeded episodes against a config, scores them
//! against the hindsight comparator, evaluates the certificate, and renders
//! plain-text summaries plus CSV reports.
//!
//! Trial k draws its intentions with seed stream 2k and its episode
//! randomness with stream 2k + 1 (see [`crate::seed::trial_seed`]), so any
//! trial can be reproduced alone. Rows are emitted in trial order and floats
//! with Rust's shortest round-trip formatting, which makes reports
//! byte-stable for a fixed config and seed.

use crate::certificate::{
    check_certificate, deviation_term, eps_schedule, eps_schedule_along, Certificate, EpsSchedule,
};
use crate::config::{EpsConditioning, ExperimentConfig};
use crate::error::{Error, Result};
use crate::mixing::{mixing_profile, MixingMethod, MixingProfile};
use crate::model::sample_intentions;
use crate::protocol::{
    best_comparator_loss, best_static_comparator_loss, comparator_trajectory, regret, run_episode,
    EpisodeSetup, Side,
};
use crate::seed::trial_seed;

/// Outcome of one trial.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub horizon: usize,
    pub cumulative_loss: f64,
    pub comparator_min: f64,
    pub regret: f64,
    pub eps_sum: f64,
    pub certificate: Certificate,
}

/// All trials plus the shared per-instance quantities and summary statistics.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub trials: Vec<TrialRecord>,
    pub mixing: MixingProfile,
    pub lipschitz: f64,
    pub deviation: f64,
    pub delta: f64,
    pub mean_regret: f64,
    pub min_regret: f64,
    pub max_regret: f64,
    /// Fraction of trials with strictly negative regret.
    pub outperformance_fraction: f64,
    /// Fraction of trials whose certificate holds.
    pub holds_fraction: f64,
    pub mean_margin: f64,
}

impl ExperimentReport {
    /// Certificate verdict for the whole run: every trial's certificate held.
    pub fn certificate_holds(&self) -> bool {
        self.holds_fraction == 1.0
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "trials: {}  horizon: {}  delta: {}\n",
            self.trials.len(),
            self.trials.first().map_or(0, |t| t.horizon),
            self.delta
        ));
        out.push_str(&format!(
            "lipschitz: {}  m_t: {}  deviation: {}\n",
            self.lipschitz,
            self.mixing.m(),
            self.deviation
        ));
        out.push_str(&format!(
            "regret: mean {}  min {}  max {}\n",
            self.mean_regret, self.min_regret, self.max_regret
        ));
        out.push_str(&format!(
            "outperformance_fraction: {}\n",
            self.outperformance_fraction
        ));
        out.push_str(&format!(
            "certificate: {} (holds in {} of {} trials, mean margin {})\n",
            if self.certificate_holds() {
                "HOLDS"
            } else {
                "DOES NOT HOLD"
            },
            (self.holds_fraction * self.trials.len() as f64).round() as usize,
            self.trials.len(),
            self.mean_margin
        ));
        out
    }
}

/// Per-trial seeds, exposed for reproducing a single trial by hand.
pub fn trial_seeds(base: u64, trial: usize) -> (u64, u64) {
    (
        trial_seed(base, 2 * trial as u64),
        trial_seed(base, 2 * trial as u64 + 1),
    )
}

/// Everything computed for one trial, including the eps schedule (the
/// experiment report keeps only its sum).
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub intentions: Vec<usize>,
    pub schedule: EpsSchedule,
}

/// Runs trial `trial` of `cfg` against precomputed shared quantities.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize, deviation: f64) -> Result<TrialOutcome> {
    let (intent_seed, episode_seed) = trial_seeds(cfg.seed, trial);
    let intentions = sample_intentions(&cfg.process, cfg.horizon, intent_seed)?;

    let setup = EpisodeSetup {
        encoders: &cfg.encoders,
        decoders: &cfg.decoders,
        loss: &cfg.loss,
        initial_output: cfg.initial_output,
    };
    let b_policy = cfg
        .encoder_policy
        .build(Side::Encoder, cfg.encoders.len(), cfg.horizon)?;
    let a_policy = cfg
        .decoder_policy
        .build(Side::Decoder, cfg.decoders.len(), cfg.horizon)?;
    let trajectory = run_episode(&setup, b_policy, a_policy, &intentions, episode_seed)?;

    let comparator = cfg.decoders.table(cfg.comparator_decoder)?;
    let (comparator_min, comparator_sequence) = if cfg.static_comparator {
        let (min, g) = best_static_comparator_loss(
            &intentions,
            &cfg.encoders,
            comparator,
            cfg.comparator_initial,
            &cfg.loss,
        )?;
        (min, vec![g; cfg.horizon])
    } else {
        best_comparator_loss(
            &intentions,
            &cfg.encoders,
            comparator,
            cfg.comparator_initial,
            &cfg.loss,
        )?
    };

    let schedule = match cfg.eps_conditioning {
        EpsConditioning::Realized => eps_schedule(
            &cfg.process,
            &cfg.loss,
            &cfg.encoders,
            comparator,
            &intentions,
            cfg.comparator_initial,
        )?,
        EpsConditioning::Comparator => {
            let states = comparator_trajectory(
                &cfg.encoders,
                comparator,
                &comparator_sequence,
                cfg.comparator_initial,
            )?;
            eps_schedule_along(
                &cfg.process,
                &cfg.loss,
                &cfg.encoders,
                comparator,
                &intentions,
                &states,
            )?
        }
    };

    let eps_sum = schedule.sum();
    let certificate = check_certificate(trajectory.cumulative_loss, deviation, eps_sum, cfg.delta)?;
    let r = regret(&trajectory, comparator_min);
    Ok(TrialOutcome {
        record: TrialRecord {
            trial,
            horizon: cfg.horizon,
            cumulative_loss: trajectory.cumulative_loss,
            comparator_min,
            regret: r,
            eps_sum,
            certificate,
        },
        intentions,
        schedule,
    })
}

/// Runs every trial of the config and aggregates the report. The mixing
/// profile, Lipschitz constant, and deviation term are computed once.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mixing = mixing_profile(&cfg.process, cfg.horizon, MixingMethod::ExactMarkov)?;
    let deviation = deviation_term(cfg.lipschitz, mixing.m(), cfg.horizon, cfg.delta)?;

    let mut trials = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        trials.push(run_trial(cfg, trial, deviation)?.record);
    }

    let count = trials.len() as f64;
    let mean_regret = trials.iter().map(|t| t.regret).sum::<f64>() / count;
    let min_regret = trials
        .iter()
        .map(|t| t.regret)
        .fold(f64::INFINITY, f64::min);
    let max_regret = trials
        .iter()
        .map(|t| t.regret)
        .fold(f64::NEG_INFINITY, f64::max);
    let outperformance_fraction = trials.iter().filter(|t| t.regret < 0.0).count() as f64 / count;
    let holds_fraction = trials.iter().filter(|t| t.certificate.holds).count() as f64 / count;
    let mean_margin = trials.iter().map(|t| t.certificate.margin).sum::<f64>() / count;

    Ok(ExperimentReport {
        trials,
        mixing,
        lipschitz: cfg.lipschitz,
        deviation,
        delta: cfg.delta,
        mean_regret,
        min_regret,
        max_regret,
        outperformance_fraction,
        holds_fraction,
        mean_margin,
    })
}

/// Parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Horizon,
    Delta,
    LearningRate,
    TransitionFlipP,
}

impl SweepParameter {
    /// Accepts the documented spellings: T, delta, learning-rate,
    /// transition-flip-p.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "T" => Ok(SweepParameter::Horizon),
            "delta" => Ok(SweepParameter::Delta),
            "learning-rate" => Ok(SweepParameter::LearningRate),
            "transition-flip-p" => Ok(SweepParameter::TransitionFlipP),
            other => Err(Error::InvalidArgument {
                what: "sweep parameter",
                reason: format!(
                    "unknown parameter {other:?}, expected T | delta | learning-rate | transition-flip-p"
                ),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub value: f64,
    pub mean_regret: f64,
    pub certificate_margin: f64,
    pub m: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
}

fn apply_parameter(
    cfg: &ExperimentConfig,
    parameter: SweepParameter,
    value: f64,
) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    match parameter {
        SweepParameter::Horizon => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::InvalidArgument {
                    what: "sweep value",
                    reason: format!("T must be a positive integer, got {value}"),
                });
            }
            out.horizon = value as usize;
        }
        SweepParameter::Delta => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::InvalidDelta {
                    delta: value,
                    max: 1.0,
                });
            }
            out.delta = value;
        }
        SweepParameter::LearningRate => {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidArgument {
                    what: "sweep value",
                    reason: format!("learning rate must be finite and nonnegative, got {value}"),
                });
            }
            use crate::config::PolicySpec;
            for spec in [&mut out.encoder_policy, &mut out.decoder_policy] {
                if let PolicySpec::ExpWeights { learning_rate } = spec {
                    *learning_rate = Some(value);
                }
            }
        }
        SweepParameter::TransitionFlipP => {
            if out.alphabet.size() != 2 {
                return Err(Error::InvalidArgument {
                    what: "sweep value",
                    reason: "transition-flip-p requires a 2-symbol alphabet".to_string(),
                });
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidArgument {
                    what: "sweep value",
                    reason: format!("flip probability must lie in [0, 1], got {value}"),
                });
            }
            out.process = crate::model::MarkovIntentionProcess::new(
                out.alphabet.clone(),
                out.process.initial().to_vec(),
                vec![vec![1.0 - value, value], vec![value, 1.0 - value]],
            )?;
        }
    }
    Ok(out)
}

/// Runs one experiment per value of the swept parameter.
pub fn sweep(
    cfg: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::InvalidArgument {
            what: "sweep values",
            reason: "must be nonempty".to_string(),
        });
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let modified = apply_parameter(cfg, parameter, value)?;
        let report = run_experiment(&modified)?;
        rows.push(SweepRow {
            value,
            mean_regret: report.mean_regret,
            certificate_margin: report.mean_margin,
            m: report.mixing.m(),
        });
    }
    Ok(SweepReport { parameter, rows })
}

// CSV renderers. Every file has a header row; floats use shortest
// round-trip formatting.

pub fn trials_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("trial,horizon,cumulative_loss,comparator_min,regret\n");
    for t in &report.trials {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t.trial, t.horizon, t.cumulative_loss, t.comparator_min, t.regret
        ));
    }
    out
}

pub fn mixing_csv(profile: &MixingProfile) -> String {
    let mut out = String::from("i,j,eta\n");
    for (i, j, eta) in profile.pairs() {
        out.push_str(&format!("{i},{j},{eta}\n"));
    }
    out
}

pub fn eps_csv(schedule: &EpsSchedule) -> String {
    let mut out = String::from("t,eps,comparator_state\n");
    for (idx, &eps) in schedule.values.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", idx + 1, eps, schedule.states[idx]));
    }
    out
}

pub fn bound_csv(report: &crate::certificate::BoundValidationReport) -> String {
    let mut out = String::from("eps,empirical_frequency,theoretical_bound,trials,std_error\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.eps, row.empirical_frequency, row.theoretical_bound, row.trials, row.std_error
        ));
    }
    out
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("value,mean_regret,certificate_margin,m_t\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.value, row.mean_regret, row.certificate_margin, row.m
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::deviation_term;
    use crate::config::parse_config;

    const DETERMINISTIC: &str = r#"
[alphabet]
size = 2

[features]
size = 2

[process]
initial = [1.0, 0.0]
transition = [[0.0, 1.0], [1.0, 0.0]]

[loss]
values = [[0.0, 1.0], [1.0, 0.0]]

[encoders]
tables = [[1, 0]]

[decoders]
tables = [[0, 1]]

[comparator]
decoder = 0

[episode]
horizon = 6
delta = 0.5
seed = 3
trials = 2

[policies.encoder]
rule = "fixed"
index = 0

[policies.decoder]
rule = "fixed"
index = 0
"#;

    const FLIP: &str = r#"
[alphabet]
size = 2

[features]
size = 2

[process]
initial = [0.5, 0.5]
transition = [[0.75, 0.25], [0.25, 0.75]]

[loss]
values = [[0.0, 1.0], [1.0, 0.0]]

[encoders]
tables = [[0, 0], [1, 1]]

[decoders]
tables = [[0, 1], [1, 1]]

[comparator]
decoder = 0

[episode]
horizon = 5
delta = 0.2
seed = 9
trials = 4
"#;

    #[test]
    fn deterministic_config_reproduces_report_bytes() {
        let cfg = parse_config(DETERMINISTIC).unwrap();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(trials_csv(&a), trials_csv(&b));
        assert_eq!(a.summary_text(), b.summary_text());
    }

    #[test]
    fn singleton_classes_have_zero_regret_in_every_trial() {
        let cfg = parse_config(DETERMINISTIC).unwrap();
        let report = run_experiment(&cfg).unwrap();
        for t in &report.trials {
            assert_eq!(t.regret, 0.0);
        }
        assert_eq!(report.outperformance_fraction, 0.0);
    }

    #[test]
    fn single_value_sweep_matches_run_experiment() {
        let cfg = parse_config(FLIP).unwrap();
        let report = run_experiment(&cfg).unwrap();
        let swept = sweep(&cfg, SweepParameter::Delta, &[cfg.delta]).unwrap();
        assert_eq!(swept.rows.len(), 1);
        assert_eq!(swept.rows[0].mean_regret, report.mean_regret);
        assert_eq!(swept.rows[0].certificate_margin, report.mean_margin);
        assert_eq!(swept.rows[0].m, report.mixing.m());
    }

    #[test]
    fn delta_sweep_has_strictly_decreasing_deviation() {
        let cfg = parse_config(FLIP).unwrap();
        let deltas = [0.05, 0.1, 0.2, 0.4, 0.8];
        let swept = sweep(&cfg, SweepParameter::Delta, &deltas).unwrap();
        // sampling does not depend on delta, so margins move exactly
        // opposite the deviation term
        let m = swept.rows[0].m;
        let mut last_dev = f64::INFINITY;
        for &delta in &deltas {
            let dev = deviation_term(cfg.lipschitz, m, cfg.horizon, delta).unwrap();
            assert!(dev < last_dev);
            last_dev = dev;
        }
        for pair in swept.rows.windows(2) {
            assert!(pair[1].certificate_margin > pair[0].certificate_margin);
        }
    }

    // Closed form for the 2-state flip chain: eta(i, j) = (1 - 2p)^(j - i),
    // so M = 1 + sum_{lag = 1}^{T - 1} (1 - 2p)^lag.
    #[test]
    fn flip_p_sweep_matches_geometric_m() {
        let cfg = parse_config(FLIP).unwrap();
        let ps = [0.1, 0.2, 0.3, 0.4, 0.5];
        let swept = sweep(&cfg, SweepParameter::TransitionFlipP, &ps).unwrap();
        for (row, &p) in swept.rows.iter().zip(ps.iter()) {
            let lambda: f64 = 1.0 - 2.0 * p;
            let closed_form: f64 = 1.0
                + (1..cfg.horizon)
                    .map(|lag| lambda.powi(lag as i32))
                    .sum::<f64>();
            assert!(
                (row.m - closed_form).abs() < 1e-12,
                "p = {p}: {} vs {closed_form}",
                row.m
            );
        }
        // cross-check one point against the enumeration route
        let modified = apply_parameter(&cfg, SweepParameter::TransitionFlipP, 0.3).unwrap();
        let brute = crate::mixing::mixing_profile(
            &modified.process,
            cfg.horizon,
            crate::mixing::MixingMethod::BruteForce,
        )
        .unwrap();
        assert!((swept.rows[2].m - brute.m()).abs() < 1e-9);
    }

    #[test]
    fn unknown_sweep_parameter_rejected() {
        assert!(SweepParameter::parse("flip").is_err());
        assert_eq!(
            SweepParameter::parse("transition-flip-p").unwrap(),
            SweepParameter::TransitionFlipP
        );
        let cfg = parse_config(FLIP).unwrap();
        assert!(sweep(&cfg, SweepParameter::Horizon, &[2.5]).is_err());
        assert!(sweep(&cfg, SweepParameter::Delta, &[]).is_err());
    }

    #[test]
    fn any_single_trial_reproduces_in_isolation() {
        let cfg = parse_config(FLIP).unwrap();
        let report = run_experiment(&cfg).unwrap();
        let deviation = report.deviation;
        for want in &report.trials {
            let alone = run_trial(&cfg, want.trial, deviation).unwrap();
            assert_eq!(alone.record.cumulative_loss, want.cumulative_loss);
            assert_eq!(alone.record.comparator_min, want.comparator_min);
            assert_eq!(alone.record.regret, want.regret);
            assert_eq!(alone.record.eps_sum, want.eps_sum);
        }
    }

    #[test]
    fn comparator_conditioning_follows_the_hindsight_trajectory() {
        use crate::certificate::eps_schedule_along;
        use crate::protocol::{best_comparator_loss, comparator_trajectory};

        let text = FLIP.replace("[episode]", "[episode]\neps_conditioning = \"comparator\"");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.eps_conditioning, EpsConditioning::Comparator);
        let report = run_experiment(&cfg).unwrap();
        let outcome = run_trial(&cfg, 1, report.deviation).unwrap();

        let comparator = cfg.decoders.table(cfg.comparator_decoder).unwrap();
        let (_, sequence) = best_comparator_loss(
            &outcome.intentions,
            &cfg.encoders,
            comparator,
            cfg.comparator_initial,
            &cfg.loss,
        )
        .unwrap();
        let states =
            comparator_trajectory(&cfg.encoders, comparator, &sequence, cfg.comparator_initial)
                .unwrap();
        let expected = eps_schedule_along(
            &cfg.process,
            &cfg.loss,
            &cfg.encoders,
            comparator,
            &outcome.intentions,
            &states,
        )
        .unwrap();
        assert_eq!(outcome.schedule, expected);
    }

    #[test]
    fn csv_headers_are_stable() {
        let cfg = parse_config(FLIP).unwrap();
        let report = run_experiment(&cfg).unwrap();
        assert!(trials_csv(&report)
            .starts_with("trial,horizon,cumulative_loss,comparator_min,regret\n"));
        assert!(mixing_csv(&report.mixing).starts_with("i,j,eta\n"));
        let outcome = run_trial(&cfg, 0, report.deviation).unwrap();
        assert!(eps_csv(&outcome.schedule).starts_with("t,eps,comparator_state\n"));
        let swept = sweep(&cfg, SweepParameter::Delta, &[0.2]).unwrap();
        assert!(sweep_csv(&swept).starts_with("value,mean_regret,certificate_margin,m_t\n"));
    }
}
