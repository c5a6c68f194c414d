//! Experiment definition files: TOML with nested sections, unknown keys
//! rejected, and semantic validation that reports every problem with its
//! field path. The full schema is documented in the repository README.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, FieldError, Result};
use crate::model::{
    lipschitz_constant, Alphabet, FeatureAlphabet, FunctionClass, LossMatrix,
    MarkovIntentionProcess,
};
use crate::protocol::{Policy, PolicyRule, Side};

/// Which comparator state sequence the eps schedule is evaluated along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsConditioning {
    /// Greedy states driven by the realized intention prefix (default).
    Realized,
    /// States of the hindsight-best comparator trajectory.
    Comparator,
}

/// Per-side policy choice as written in the config; the learning rate, when
/// omitted, defaults to sqrt(ln K / T) at build time.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Fixed { index: usize },
    Uniform,
    ExpWeights { learning_rate: Option<f64> },
}

impl PolicySpec {
    pub fn build(&self, side: Side, class_size: usize, horizon: usize) -> Result<Policy> {
        let rule = match *self {
            PolicySpec::Fixed { index } => PolicyRule::Fixed { index },
            PolicySpec::Uniform => PolicyRule::UniformRandom,
            PolicySpec::ExpWeights { learning_rate } => PolicyRule::ExpWeights {
                learning_rate: learning_rate
                    .unwrap_or_else(|| Policy::default_learning_rate(class_size, horizon)),
            },
        };
        Policy::new(side, rule, class_size)
    }
}

/// Fully validated experiment: every referenced index is in bounds and every
/// matrix satisfies its stochasticity constraints. Treat as immutable once
/// loaded; sweeps clone and rebuild.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub alphabet: Alphabet,
    pub features: FeatureAlphabet,
    pub process: MarkovIntentionProcess,
    pub loss: LossMatrix,
    /// Effective Hamming-Lipschitz constant: derived from the loss table, or
    /// the configured override (which must dominate the derived value).
    pub lipschitz: f64,
    pub encoders: FunctionClass,
    pub decoders: FunctionClass,
    /// Index of the fixed comparator decoder.
    pub comparator_decoder: usize,
    /// Constant encoder index used by bound validation.
    pub comparator_encoder: usize,
    /// Comparator's initial output symbol.
    pub comparator_initial: usize,
    /// Restrict the hindsight comparator to a single fixed encoder.
    pub static_comparator: bool,
    pub horizon: usize,
    /// Closed loop's initial output symbol.
    pub initial_output: usize,
    pub delta: f64,
    pub seed: u64,
    pub trials: usize,
    pub eps_conditioning: EpsConditioning,
    pub encoder_policy: PolicySpec,
    pub decoder_policy: PolicySpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    alphabet: RawAlphabet,
    features: RawFeatures,
    process: RawProcess,
    loss: RawLoss,
    encoders: RawTables,
    decoders: RawTables,
    comparator: RawComparator,
    episode: RawEpisode,
    #[serde(default)]
    policies: RawPolicies,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlphabet {
    size: usize,
    labels: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeatures {
    size: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProcess {
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoss {
    values: Vec<Vec<f64>>,
    lipschitz_override: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTables {
    tables: Vec<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComparator {
    decoder: usize,
    #[serde(default)]
    encoder: usize,
    #[serde(default)]
    initial_output: usize,
    #[serde(default, rename = "static")]
    static_comparator: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEpisode {
    horizon: usize,
    #[serde(default)]
    initial_output: usize,
    delta: f64,
    seed: u64,
    trials: usize,
    eps_conditioning: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicies {
    encoder: Option<RawPolicy>,
    decoder: Option<RawPolicy>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    rule: String,
    index: Option<usize>,
    learning_rate: Option<f64>,
}

fn build_policy_spec(
    raw: Option<&RawPolicy>,
    path: &str,
    class_size: usize,
    errors: &mut Vec<FieldError>,
) -> PolicySpec {
    let Some(raw) = raw else {
        return PolicySpec::ExpWeights {
            learning_rate: None,
        };
    };
    let fail = |errors: &mut Vec<FieldError>, field: &str, reason: String| {
        errors.push(FieldError {
            path: format!("{path}.{field}"),
            reason,
        });
    };
    match raw.rule.as_str() {
        "fixed" => {
            if raw.learning_rate.is_some() {
                fail(errors, "learning_rate", "only valid for exp-weights".into());
            }
            match raw.index {
                Some(index) if index < class_size => PolicySpec::Fixed { index },
                Some(index) => {
                    fail(
                        errors,
                        "index",
                        format!("index {index} out of range for class of size {class_size}"),
                    );
                    PolicySpec::Fixed { index: 0 }
                }
                None => {
                    fail(errors, "index", "required for fixed rule".into());
                    PolicySpec::Fixed { index: 0 }
                }
            }
        }
        "uniform" => {
            if raw.index.is_some() {
                fail(errors, "index", "only valid for the fixed rule".into());
            }
            if raw.learning_rate.is_some() {
                fail(errors, "learning_rate", "only valid for exp-weights".into());
            }
            PolicySpec::Uniform
        }
        "exp-weights" => {
            if raw.index.is_some() {
                fail(errors, "index", "only valid for the fixed rule".into());
            }
            if let Some(rate) = raw.learning_rate {
                if !rate.is_finite() || rate < 0.0 {
                    fail(
                        errors,
                        "learning_rate",
                        format!("must be finite and nonnegative, got {rate}"),
                    );
                }
            }
            PolicySpec::ExpWeights {
                learning_rate: raw.learning_rate,
            }
        }
        other => {
            fail(
                errors,
                "rule",
                format!("unknown rule {other:?}, expected fixed | uniform | exp-weights"),
            );
            PolicySpec::ExpWeights {
                learning_rate: None,
            }
        }
    }
}

/// Parses and validates an experiment definition from TOML text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text)?;
    let mut errors: Vec<FieldError> = Vec::new();
    let fail = |path: &str, reason: String| FieldError {
        path: path.to_string(),
        reason,
    };

    let alphabet = match &raw.alphabet.labels {
        Some(labels) => Alphabet::with_labels(raw.alphabet.size, labels.clone()),
        None => Alphabet::new(raw.alphabet.size),
    };
    let alphabet = match alphabet {
        Ok(a) => Some(a),
        Err(e) => {
            errors.push(fail("alphabet", e.to_string()));
            None
        }
    };

    let features = match FeatureAlphabet::new(raw.features.size) {
        Ok(f) => Some(f),
        Err(e) => {
            errors.push(fail("features.size", e.to_string()));
            None
        }
    };

    let n = raw.alphabet.size;
    let process = if let Some(a) = alphabet.clone() {
        let violations =
            MarkovIntentionProcess::violations(n, &raw.process.initial, &raw.process.transition);
        if violations.is_empty() {
            MarkovIntentionProcess::new(
                a,
                raw.process.initial.clone(),
                raw.process.transition.clone(),
            )
            .ok()
        } else {
            for v in violations {
                errors.push(fail("process", v));
            }
            None
        }
    } else {
        None
    };

    let loss = match LossMatrix::new(raw.loss.values.clone()) {
        Ok(l) if l.side() == n => Some(l),
        Ok(l) => {
            errors.push(fail(
                "loss.values",
                format!("side {} does not match alphabet size {n}", l.side()),
            ));
            None
        }
        Err(e) => {
            errors.push(fail("loss.values", e.to_string()));
            None
        }
    };

    let lipschitz = loss.as_ref().map(|l| {
        let derived = lipschitz_constant(l);
        match raw.loss.lipschitz_override {
            None => derived,
            Some(v) if v.is_finite() && v >= derived => v,
            Some(v) => {
                errors.push(fail(
                    "loss.lipschitz_override",
                    format!("{v} is below the derived constant {derived}"),
                ));
                derived
            }
        }
    });

    let encoders = match (&alphabet, &features) {
        (Some(a), Some(f)) => match FunctionClass::encoder(a, f, raw.encoders.tables.clone()) {
            Ok(c) => Some(c),
            Err(e) => {
                errors.push(fail("encoders.tables", e.to_string()));
                None
            }
        },
        _ => None,
    };
    let decoders = match (&alphabet, &features) {
        (Some(a), Some(f)) => match FunctionClass::decoder(f, a, raw.decoders.tables.clone()) {
            Ok(c) => Some(c),
            Err(e) => {
                errors.push(fail("decoders.tables", e.to_string()));
                None
            }
        },
        _ => None,
    };

    if let Some(d) = &decoders {
        if raw.comparator.decoder >= d.len() {
            errors.push(fail(
                "comparator.decoder",
                format!(
                    "index {} out of range for decoder class of size {}",
                    raw.comparator.decoder,
                    d.len()
                ),
            ));
        }
    }
    if let Some(e) = &encoders {
        if raw.comparator.encoder >= e.len() {
            errors.push(fail(
                "comparator.encoder",
                format!(
                    "index {} out of range for encoder class of size {}",
                    raw.comparator.encoder,
                    e.len()
                ),
            ));
        }
    }
    if raw.comparator.initial_output >= n {
        errors.push(fail(
            "comparator.initial_output",
            format!(
                "symbol {} outside alphabet of size {n}",
                raw.comparator.initial_output
            ),
        ));
    }

    if raw.episode.horizon == 0 {
        errors.push(fail("episode.horizon", "must be at least 1".into()));
    }
    if raw.episode.trials == 0 {
        errors.push(fail("episode.trials", "must be at least 1".into()));
    }
    if !(raw.episode.delta > 0.0 && raw.episode.delta <= 1.0) {
        errors.push(fail(
            "episode.delta",
            format!("must lie in (0, 1], got {}", raw.episode.delta),
        ));
    }
    if raw.episode.initial_output >= n {
        errors.push(fail(
            "episode.initial_output",
            format!(
                "symbol {} outside alphabet of size {n}",
                raw.episode.initial_output
            ),
        ));
    }
    let eps_conditioning = match raw.episode.eps_conditioning.as_deref() {
        None | Some("realized") => EpsConditioning::Realized,
        Some("comparator") => EpsConditioning::Comparator,
        Some(other) => {
            errors.push(fail(
                "episode.eps_conditioning",
                format!("unknown mode {other:?}, expected realized | comparator"),
            ));
            EpsConditioning::Realized
        }
    };

    let encoder_class_size = encoders.as_ref().map_or(1, FunctionClass::len);
    let decoder_class_size = decoders.as_ref().map_or(1, FunctionClass::len);
    let encoder_policy = build_policy_spec(
        raw.policies.encoder.as_ref(),
        "policies.encoder",
        encoder_class_size,
        &mut errors,
    );
    let decoder_policy = build_policy_spec(
        raw.policies.decoder.as_ref(),
        "policies.decoder",
        decoder_class_size,
        &mut errors,
    );

    if !errors.is_empty() {
        return Err(Error::ConfigInvalid { errors });
    }

    Ok(ExperimentConfig {
        alphabet: alphabet.expect("validated"),
        features: features.expect("validated"),
        process: process.expect("validated"),
        loss: loss.expect("validated"),
        lipschitz: lipschitz.expect("validated"),
        encoders: encoders.expect("validated"),
        decoders: decoders.expect("validated"),
        comparator_decoder: raw.comparator.decoder,
        comparator_encoder: raw.comparator.encoder,
        comparator_initial: raw.comparator.initial_output,
        static_comparator: raw.comparator.static_comparator,
        horizon: raw.episode.horizon,
        initial_output: raw.episode.initial_output,
        delta: raw.episode.delta,
        seed: raw.episode.seed,
        trials: raw.episode.trials,
        eps_conditioning,
        encoder_policy,
        decoder_policy,
    })
}

/// Loads and validates an experiment definition file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
