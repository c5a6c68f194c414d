//! Closed-loop episode engine and the hindsight comparator.
//!
//! One step of the loop: the encoder side B sees its intention and the
//! previous output, picks an encoder table g_t, and emits z_t = g_t(out_{t-1}).
//! The decoder side A sees only z_t, picks a decoder table h_t, and produces
//! out_t = h_t(z_t). Both sides then receive the realized scalar loss
//! L[out_t][y_t] as feedback. A never observes y_t itself.
//!
//! The comparator replays the same intention sequence through one fixed
//! decoder and a hindsight-chosen encoder sequence; its output trajectory is
//! autonomous (it never reads the intentions).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ClassKind, FunctionClass, LossMatrix};

/// Weights are floored here after each update so the state stays strictly
/// positive even under long runs of importance-weighted punishment.
const MIN_WEIGHT: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Encoder,
    Decoder,
}

/// Selection rule over a function class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyRule {
    /// Always play one table.
    Fixed { index: usize },
    /// Uniform draw each step, no adaptation.
    UniformRandom,
    /// Multiplicative weights on importance-weighted loss estimates of the
    /// chosen index (bandit feedback). Losses are scaled by the loss table's
    /// range bound before the update.
    ExpWeights { learning_rate: f64 },
}

/// One side's selection state: a rule plus one positive weight per table.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    side: Side,
    rule: PolicyRule,
    weights: Vec<f64>,
}

impl Policy {
    pub fn new(side: Side, rule: PolicyRule, class_size: usize) -> Result<Self> {
        if class_size == 0 {
            return Err(Error::InvalidArgument {
                what: "policy",
                reason: "class size must be at least 1".to_string(),
            });
        }
        match rule {
            PolicyRule::Fixed { index } if index >= class_size => {
                return Err(Error::IndexOutOfBounds {
                    what: "fixed policy index",
                    index,
                    len: class_size,
                });
            }
            PolicyRule::ExpWeights { learning_rate }
                if !learning_rate.is_finite() || learning_rate < 0.0 =>
            {
                return Err(Error::InvalidArgument {
                    what: "policy",
                    reason: format!(
                        "learning rate must be finite and nonnegative, got {learning_rate}"
                    ),
                });
            }
            _ => {}
        }
        Ok(Self {
            side,
            rule,
            weights: vec![1.0 / class_size as f64; class_size],
        })
    }

    /// Default rate sqrt(ln K / T) for a K-sized class over horizon T.
    pub fn default_learning_rate(class_size: usize, horizon: usize) -> f64 {
        if class_size <= 1 || horizon == 0 {
            0.0
        } else {
            ((class_size as f64).ln() / horizon as f64).sqrt()
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn rule(&self) -> PolicyRule {
        self.rule
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Current choice distribution over table indices.
    pub fn distribution(&self) -> Vec<f64> {
        match self.rule {
            PolicyRule::Fixed { index } => {
                let mut probs = vec![0.0; self.weights.len()];
                probs[index] = 1.0;
                probs
            }
            _ => {
                let total: f64 = self.weights.iter().sum();
                self.weights.iter().map(|w| w / total).collect()
            }
        }
    }

    /// Draws a table index and returns it with its selection probability.
    /// Fixed policies consume no randomness.
    fn choose(&self, rng: &mut ChaCha8Rng) -> (usize, f64) {
        if let PolicyRule::Fixed { index } = self.rule {
            return (index, 1.0);
        }
        let probs = self.distribution();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = None;
        for (k, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            acc += p;
            chosen = Some(k);
            if u < acc {
                break;
            }
        }
        let k = chosen.expect("positive weights leave at least one choice");
        (k, probs[k])
    }

    /// Feeds back the realized scalar loss for the chosen index. Only
    /// exp-weights policies mutate state.
    fn observe(&mut self, index: usize, probability: f64, loss: f64, range_bound: f64) {
        let PolicyRule::ExpWeights { learning_rate } = self.rule else {
            return;
        };
        if learning_rate == 0.0 {
            return;
        }
        let scaled = if range_bound > 0.0 {
            loss / range_bound
        } else {
            0.0
        };
        let estimate = scaled / probability;
        let exponent = (learning_rate * estimate).min(700.0);
        self.weights[index] *= (-exponent).exp();
        let total: f64 = self.weights.iter().sum();
        for w in self.weights.iter_mut() {
            *w = (*w / total).max(MIN_WEIGHT);
        }
    }
}

/// Immutable pieces an episode runs against.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSetup<'a> {
    pub encoders: &'a FunctionClass,
    pub decoders: &'a FunctionClass,
    pub loss: &'a LossMatrix,
    /// Output symbol fed to the first encoder application.
    pub initial_output: usize,
}

impl EpisodeSetup<'_> {
    fn validate(&self) -> Result<()> {
        if self.encoders.kind() != ClassKind::Encoder {
            return Err(Error::InvalidArgument {
                what: "episode",
                reason: "encoder class has decoder kind".to_string(),
            });
        }
        if self.decoders.kind() != ClassKind::Decoder {
            return Err(Error::InvalidArgument {
                what: "episode",
                reason: "decoder class has encoder kind".to_string(),
            });
        }
        let n = self.loss.side();
        if self.encoders.input_size() != n || self.decoders.output_size() != n {
            return Err(Error::AlphabetMismatch {
                context: format!(
                    "loss side {n} vs encoder input {} / decoder output {}",
                    self.encoders.input_size(),
                    self.decoders.output_size()
                ),
            });
        }
        if self.encoders.output_size() != self.decoders.input_size() {
            return Err(Error::AlphabetMismatch {
                context: format!(
                    "encoder output {} vs decoder input {}",
                    self.encoders.output_size(),
                    self.decoders.input_size()
                ),
            });
        }
        if self.initial_output >= n {
            return Err(Error::IndexOutOfBounds {
                what: "initial output",
                index: self.initial_output,
                len: n,
            });
        }
        Ok(())
    }
}

/// Full record of one closed-loop episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub horizon: usize,
    /// y_1..y_T
    pub intentions: Vec<usize>,
    /// out_0..out_T
    pub outputs: Vec<usize>,
    /// z_1..z_T
    pub encodings: Vec<usize>,
    pub encoder_choices: Vec<usize>,
    pub decoder_choices: Vec<usize>,
    pub step_losses: Vec<f64>,
    pub cumulative_loss: f64,
}

impl Trajectory {
    /// Re-derives outputs and encodings from the recorded choices and checks
    /// every stored value, including the cumulative sum (within 1e-9).
    pub fn verify(&self, setup: &EpisodeSetup<'_>) -> Result<()> {
        let t = self.horizon;
        if self.intentions.len() != t
            || self.outputs.len() != t + 1
            || self.encodings.len() != t
            || self.encoder_choices.len() != t
            || self.decoder_choices.len() != t
            || self.step_losses.len() != t
        {
            return Err(Error::InvalidArgument {
                what: "trajectory",
                reason: "field lengths inconsistent with horizon".to_string(),
            });
        }
        if self.outputs[0] != setup.initial_output {
            return Err(Error::InvalidArgument {
                what: "trajectory",
                reason: "initial output does not match setup".to_string(),
            });
        }
        for step in 0..t {
            let g = setup.encoders.table(self.encoder_choices[step])?;
            let h = setup.decoders.table(self.decoder_choices[step])?;
            let z = g[self.outputs[step]];
            let out = h[z];
            if z != self.encodings[step] || out != self.outputs[step + 1] {
                return Err(Error::InvalidArgument {
                    what: "trajectory",
                    reason: format!("closed-loop mismatch at step {}", step + 1),
                });
            }
            let loss = setup.loss.get(out, self.intentions[step]);
            if loss != self.step_losses[step] {
                return Err(Error::InvalidArgument {
                    what: "trajectory",
                    reason: format!("loss mismatch at step {}", step + 1),
                });
            }
        }
        let sum: f64 = self.step_losses.iter().sum();
        if (sum - self.cumulative_loss).abs() > 1e-9 {
            return Err(Error::InvalidArgument {
                what: "trajectory",
                reason: "cumulative loss does not match step losses".to_string(),
            });
        }
        Ok(())
    }
}

/// Runs one closed-loop episode. Per step, in order: B draws an encoder, the
/// encoding is computed, A draws a decoder, the output and loss are recorded,
/// then both policies receive the scalar loss. The single seeded generator is
/// consumed in exactly that order, so identical inputs reproduce the
/// trajectory bit for bit.
pub fn run_episode(
    setup: &EpisodeSetup<'_>,
    mut b_policy: Policy,
    mut a_policy: Policy,
    intentions: &[usize],
    seed: u64,
) -> Result<Trajectory> {
    setup.validate()?;
    if b_policy.side() != Side::Encoder || a_policy.side() != Side::Decoder {
        return Err(Error::InvalidArgument {
            what: "episode",
            reason: "policy sides do not match their classes".to_string(),
        });
    }
    if b_policy.weights().len() != setup.encoders.len() {
        return Err(Error::LengthMismatch {
            left: b_policy.weights().len(),
            right: setup.encoders.len(),
        });
    }
    if a_policy.weights().len() != setup.decoders.len() {
        return Err(Error::LengthMismatch {
            left: a_policy.weights().len(),
            right: setup.decoders.len(),
        });
    }
    if intentions.is_empty() {
        return Err(Error::InvalidArgument {
            what: "episode",
            reason: "intention sequence must be nonempty".to_string(),
        });
    }
    let n = setup.loss.side();
    if let Some(&bad) = intentions.iter().find(|&&y| y >= n) {
        return Err(Error::IndexOutOfBounds {
            what: "intention symbol",
            index: bad,
            len: n,
        });
    }

    let horizon = intentions.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outputs = Vec::with_capacity(horizon + 1);
    outputs.push(setup.initial_output);
    let mut encodings = Vec::with_capacity(horizon);
    let mut encoder_choices = Vec::with_capacity(horizon);
    let mut decoder_choices = Vec::with_capacity(horizon);
    let mut step_losses = Vec::with_capacity(horizon);

    for (step, &y) in intentions.iter().enumerate() {
        let (g_idx, g_prob) = b_policy.choose(&mut rng);
        let z = setup.encoders.tables()[g_idx][outputs[step]];
        let (h_idx, h_prob) = a_policy.choose(&mut rng);
        let out = setup.decoders.tables()[h_idx][z];
        let loss = setup.loss.get(out, y);

        outputs.push(out);
        encodings.push(z);
        encoder_choices.push(g_idx);
        decoder_choices.push(h_idx);
        step_losses.push(loss);

        let range = setup.loss.range_bound();
        b_policy.observe(g_idx, g_prob, loss, range);
        a_policy.observe(h_idx, h_prob, loss, range);
    }

    let cumulative_loss = step_losses.iter().sum();
    Ok(Trajectory {
        horizon,
        intentions: intentions.to_vec(),
        outputs,
        encodings,
        encoder_choices,
        decoder_choices,
        step_losses,
        cumulative_loss,
    })
}

fn validate_comparator(
    encoders: &FunctionClass,
    comparator: &[usize],
    initial_output: usize,
) -> Result<()> {
    if comparator.len() != encoders.output_size() {
        return Err(Error::AlphabetMismatch {
            context: format!(
                "comparator decoder domain {} vs encoder output alphabet {}",
                comparator.len(),
                encoders.output_size()
            ),
        });
    }
    let n = encoders.input_size();
    if let Some(&bad) = comparator.iter().find(|&&s| s >= n) {
        return Err(Error::IndexOutOfBounds {
            what: "comparator decoder output",
            index: bad,
            len: n,
        });
    }
    if initial_output >= n {
        return Err(Error::IndexOutOfBounds {
            what: "comparator initial output",
            index: initial_output,
            len: n,
        });
    }
    Ok(())
}

/// Output states out_0..out_T of the fixed-decoder comparator driven by the
/// given encoder index sequence. Autonomous: never reads the intentions.
pub fn comparator_trajectory(
    encoders: &FunctionClass,
    comparator: &[usize],
    encoder_sequence: &[usize],
    initial_output: usize,
) -> Result<Vec<usize>> {
    validate_comparator(encoders, comparator, initial_output)?;
    let mut states = Vec::with_capacity(encoder_sequence.len() + 1);
    states.push(initial_output);
    for &g in encoder_sequence {
        let table = encoders.table(g)?;
        let state = *states.last().expect("nonempty");
        states.push(comparator[table[state]]);
    }
    Ok(states)
}

/// Total loss of an output sequence out_1..out_T against intentions y_1..y_T,
/// accumulated in time order.
pub fn trajectory_loss(loss: &LossMatrix, outputs: &[usize], intentions: &[usize]) -> Result<f64> {
    if outputs.len() != intentions.len() {
        return Err(Error::LengthMismatch {
            left: outputs.len(),
            right: intentions.len(),
        });
    }
    let mut total = 0.0;
    for (&out, &y) in outputs.iter().zip(intentions.iter()) {
        total += loss.get(out, y);
    }
    Ok(total)
}

/// Exact minimum over all encoder index sequences of the comparator's total
/// loss on `intentions`, by dynamic programming over the comparator state.
/// Ties break toward the lowest encoder index at every step, which makes the
/// returned sequence the lexicographically smallest minimizer. Runs in
/// O(T * |Y| * |G|).
pub fn best_comparator_loss(
    intentions: &[usize],
    encoders: &FunctionClass,
    comparator: &[usize],
    initial_output: usize,
    loss: &LossMatrix,
) -> Result<(f64, Vec<usize>)> {
    validate_comparator(encoders, comparator, initial_output)?;
    let n = encoders.input_size();
    if let Some(&bad) = intentions.iter().find(|&&y| y >= loss.side()) {
        return Err(Error::IndexOutOfBounds {
            what: "intention symbol",
            index: bad,
            len: loss.side(),
        });
    }
    let horizon = intentions.len();
    if horizon == 0 {
        return Ok((0.0, Vec::new()));
    }

    // Composed next-state table per encoder: state -> comparator[g(state)].
    let next: Vec<Vec<usize>> = encoders
        .tables()
        .iter()
        .map(|g| g.iter().map(|&z| comparator[z]).collect())
        .collect();

    // Backward cost-to-go with per-(step, state) argmin, lowest index first.
    let mut value = vec![0.0f64; n];
    let mut choice = vec![vec![0usize; n]; horizon];
    for step in (0..horizon).rev() {
        let y = intentions[step];
        let mut new_value = vec![f64::INFINITY; n];
        for state in 0..n {
            let mut best = f64::INFINITY;
            let mut best_g = 0;
            for (g, table) in next.iter().enumerate() {
                let out = table[state];
                let cost = loss.get(out, y) + value[out];
                if cost < best {
                    best = cost;
                    best_g = g;
                }
            }
            new_value[state] = best;
            choice[step][state] = best_g;
        }
        value = new_value;
    }

    let mut sequence = Vec::with_capacity(horizon);
    let mut state = initial_output;
    for step_choice in &choice {
        let g = step_choice[state];
        sequence.push(g);
        state = next[g][state];
    }
    Ok((value[initial_output], sequence))
}

/// Minimum comparator loss over single fixed encoders (the same table every
/// step). Ties break toward the lowest index.
pub fn best_static_comparator_loss(
    intentions: &[usize],
    encoders: &FunctionClass,
    comparator: &[usize],
    initial_output: usize,
    loss: &LossMatrix,
) -> Result<(f64, usize)> {
    validate_comparator(encoders, comparator, initial_output)?;
    let mut best = f64::INFINITY;
    let mut best_g = 0;
    for g in 0..encoders.len() {
        let sequence = vec![g; intentions.len()];
        let states = comparator_trajectory(encoders, comparator, &sequence, initial_output)?;
        let total = trajectory_loss(loss, &states[1..], intentions)?;
        if total < best {
            best = total;
            best_g = g;
        }
    }
    Ok((best, best_g))
}

/// Realized cumulative loss minus the hindsight comparator minimum. Negative
/// means the closed loop outperformed the fixed decoder.
pub fn regret(trajectory: &Trajectory, comparator_min: f64) -> f64 {
    trajectory.cumulative_loss - comparator_min
}
