//! Concentration validation and the outperformance certificate.
//!
//! The comparator loss total psi(y) = sum_t L[out_t][y_t] is Lipschitz in the
//! Hamming metric because its output trajectory is autonomous, so a
//! McDiarmid-type inequality for dependent sequences applies:
//!
//! ```text
//! Pr[ |psi - E[psi]| > eps ] <= 2 exp( -eps^2 / (2 T lipschitz^2 M^2) )
//! ```
//!
//! with M the dependence factor from [`crate::mixing`]. Inverting the tail at
//! confidence delta gives the deviation term
//! `lipschitz * M * sqrt(2 T log(2 / delta))`, and a closed-loop run is
//! certified to outperform every fixed-decoder comparator, with probability
//! at least 1 - delta, when
//!
//! ```text
//! empirical_loss + deviation < sum_t eps_t
//! ```
//!
//! holds strictly, where eps_t is the smallest expected per-step loss the
//! fixed comparator decoder allows at step t given the history.
//!
//! Two supporting quantities validate the inequality chain behind the
//! certificate on enumerable instances:
//! - [`eps_floor_schedule`], the per-step infimum over every comparator state
//!   reachable through the encoder class (not just the greedy state), and
//! - [`min_predictive_comparator_loss`], the exact minimum over encoder
//!   sequences of the predictive comparator loss under the same one-step
//!   conditional laws.
//!
//! The floor sum never exceeds the sequence minimum; the greedy schedule of
//! [`eps_schedule`] can, because a locally best step may steer the comparator
//! into a state with poor continuations.

use crate::error::{Error, Result};
use crate::mixing::{mixing_profile, MixingMethod};
use crate::model::{
    lipschitz_constant, sample_intentions, FunctionClass, LossMatrix, MarkovIntentionProcess,
};
use crate::protocol::{comparator_trajectory, trajectory_loss};
use crate::seed::trial_seed;

/// Evaluated certificate: `holds` is `margin > 0` with
/// `margin = eps_sum - empirical_loss - deviation`, i.e. the strict
/// inequality `empirical_loss + deviation < eps_sum`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub empirical_loss: f64,
    pub deviation: f64,
    pub eps_sum: f64,
    pub delta: f64,
    pub holds: bool,
    pub margin: f64,
}

/// Per-step minimal expected losses plus the comparator states they were
/// evaluated at (out_0..out_T, the greedy trajectory for [`eps_schedule`]).
#[derive(Debug, Clone, PartialEq)]
pub struct EpsSchedule {
    pub values: Vec<f64>,
    pub states: Vec<usize>,
}

impl EpsSchedule {
    /// Left-to-right sum of the per-step values.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// One grid point of a tail-bound validation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub eps: f64,
    pub empirical_frequency: f64,
    pub theoretical_bound: f64,
    pub trials: usize,
    pub std_error: f64,
}

/// Monte Carlo check of the dependent-sequence tail bound against the exact
/// expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundValidationReport {
    pub rows: Vec<BoundRow>,
    pub expected_psi: f64,
    pub lipschitz: f64,
    pub m: f64,
    pub horizon: usize,
}

fn check_instance(
    process: &MarkovIntentionProcess,
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
) -> Result<()> {
    let n = process.size();
    if loss.side() != n || encoders.input_size() != n {
        return Err(Error::AlphabetMismatch {
            context: format!(
                "process size {n} vs loss side {} / encoder input {}",
                loss.side(),
                encoders.input_size()
            ),
        });
    }
    if comparator.len() != encoders.output_size() {
        return Err(Error::AlphabetMismatch {
            context: format!(
                "comparator decoder domain {} vs encoder output alphabet {}",
                comparator.len(),
                encoders.output_size()
            ),
        });
    }
    if let Some(&bad) = comparator.iter().find(|&&s| s >= n) {
        return Err(Error::IndexOutOfBounds {
            what: "comparator decoder output",
            index: bad,
            len: n,
        });
    }
    Ok(())
}

/// One-step predictive law of y_t given the realized prefix: the initial
/// distribution when the prefix is empty, else the transition row of the last
/// prefix symbol.
fn predictive_law<'a>(
    process: &'a MarkovIntentionProcess,
    y_prefix: &[usize],
) -> Result<&'a [f64]> {
    match y_prefix.last() {
        None => Ok(process.initial()),
        Some(&last) => {
            if last >= process.size() {
                return Err(Error::IndexOutOfBounds {
                    what: "prefix symbol",
                    index: last,
                    len: process.size(),
                });
            }
            Ok(process.row(last))
        }
    }
}

/// Expected loss of playing encoder `g` from comparator state `state` under
/// `law`, accumulated over intention symbols in ascending order.
fn step_cost(
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
    law: &[f64],
    state: usize,
    g: usize,
) -> f64 {
    let out = comparator[encoders.tables()[g][state]];
    let mut cost = 0.0;
    for (y, &p) in law.iter().enumerate() {
        cost += p * loss.get(out, y);
    }
    cost
}

fn min_step_cost(
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
    law: &[f64],
    state: usize,
) -> (f64, usize) {
    let mut best = f64::INFINITY;
    let mut best_g = 0;
    for g in 0..encoders.len() {
        let cost = step_cost(loss, encoders, comparator, law, state, g);
        if cost < best {
            best = cost;
            best_g = g;
        }
    }
    (best, best_g)
}

/// Smallest expected loss any encoder choice allows at the next step, given
/// the realized intention prefix and the comparator state out_{t-1}:
/// `min over g of sum_y Pr[y_t = y | prefix] * L[comparator(g(state))][y]`.
pub fn eps_t(
    process: &MarkovIntentionProcess,
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
    y_prefix: &[usize],
    comparator_state: usize,
) -> Result<f64> {
    check_instance(process, loss, encoders, comparator)?;
    if let Some(&bad) = y_prefix.iter().find(|&&y| y >= process.size()) {
        return Err(Error::IndexOutOfBounds {
            what: "prefix symbol",
            index: bad,
            len: process.size(),
        });
    }
    if comparator_state >= encoders.input_size() {
        return Err(Error::IndexOutOfBounds {
            what: "comparator state",
            index: comparator_state,
            len: encoders.input_size(),
        });
    }
    let law = predictive_law(process, y_prefix)?;
    Ok(min_step_cost(loss, encoders, comparator, law, comparator_state).0)
}

/// Evaluates eps_t for t = 1..T along the realized intention prefix,
/// advancing the comparator state through the greedy minimizer of each step
/// (ties toward the lowest encoder index). The visited states are returned
/// for audit.
pub fn eps_schedule(
    process: &MarkovIntentionProcess,
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
    intentions: &[usize],
    initial_state: usize,
) -> Result<EpsSchedule> {
    check_instance(process, loss, encoders, comparator)?;
    let mut values = Vec::with_capacity(intentions.len());
    let mut states = Vec::with_capacity(intentions.len() + 1);
    states.push(initial_state);
    let mut state = initial_state;
    for t in 0..intentions.len() {
        let law = predictive_law(process, &intentions[..t])?;
        let (value, g) = min_step_cost(loss, encoders, comparator, law, state);
        values.push(value);
        state = comparator[encoders.tables()[g][state]];
        states.push(state);
    }
    Ok(EpsSchedule { values, states })
}

/// Evaluates eps_t along externally supplied comparator states out_0..out_T
/// (for example the hindsight-optimal trajectory) instead of the greedy ones.
pub fn eps_schedule_along(
    process: &MarkovIntentionProcess,
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
    intentions: &[usize],
    states: &[usize],
) -> Result<EpsSchedule> {
    check_instance(process, loss, encoders, comparator)?;
    if states.len() != intentions.len() + 1 {
        return Err(Error::LengthMismatch {
            left: states.len(),
            right: intentions.len() + 1,
        });
    }
    let mut values = Vec::with_capacity(intentions.len());
    for t in 0..intentions.len() {
        let law = predictive_law(process, &intentions[..t])?;
        values.push(min_step_cost(loss, encoders, comparator, law, states[t]).0);
    }
    Ok(EpsSchedule {
        values,
        states: states.to_vec(),
    })
}

/// Per-step infimum of the expected loss over every comparator state
/// reachable through the encoder class at that step (and every encoder
/// choice), under the same predictive laws as [`eps_schedule`]. Each entry
/// lower-bounds the corresponding step of every encoder sequence, so the sum
/// never exceeds [`min_predictive_comparator_loss`].
pub fn eps_floor_schedule(
    process: &MarkovIntentionProcess,
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
    intentions: &[usize],
    initial_state: usize,
) -> Result<Vec<f64>> {
    check_instance(process, loss, encoders, comparator)?;
    let n = encoders.input_size();
    if initial_state >= n {
        return Err(Error::IndexOutOfBounds {
            what: "comparator state",
            index: initial_state,
            len: n,
        });
    }
    let mut reachable = vec![false; n];
    reachable[initial_state] = true;
    let mut floors = Vec::with_capacity(intentions.len());
    for t in 0..intentions.len() {
        let law = predictive_law(process, &intentions[..t])?;
        let mut best = f64::INFINITY;
        let mut next = vec![false; n];
        for state in 0..n {
            if !reachable[state] {
                continue;
            }
            for g in 0..encoders.len() {
                let cost = step_cost(loss, encoders, comparator, law, state, g);
                if cost < best {
                    best = cost;
                }
                next[comparator[encoders.tables()[g][state]]] = true;
            }
        }
        floors.push(best);
        reachable = next;
    }
    Ok(floors)
}

/// Exact minimum over all encoder index sequences of the predictive
/// comparator loss `sum_t E[ L[out_t][y_t] | prefix_t ]`, by dynamic
/// programming over the comparator state with the same one-step conditional
/// laws as [`eps_schedule`].
pub fn min_predictive_comparator_loss(
    process: &MarkovIntentionProcess,
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
    intentions: &[usize],
    initial_state: usize,
) -> Result<f64> {
    check_instance(process, loss, encoders, comparator)?;
    let n = encoders.input_size();
    if initial_state >= n {
        return Err(Error::IndexOutOfBounds {
            what: "comparator state",
            index: initial_state,
            len: n,
        });
    }
    let horizon = intentions.len();
    let mut laws = Vec::with_capacity(horizon);
    for t in 0..horizon {
        laws.push(predictive_law(process, &intentions[..t])?.to_vec());
    }
    let mut value = vec![0.0f64; n];
    for t in (0..horizon).rev() {
        let mut new_value = vec![f64::INFINITY; n];
        for state in 0..n {
            for g in 0..encoders.len() {
                let next = comparator[encoders.tables()[g][state]];
                let cost = step_cost(loss, encoders, comparator, &laws[t], state, g) + value[next];
                if cost < new_value[state] {
                    new_value[state] = cost;
                }
            }
        }
        value = new_value;
    }
    Ok(value[initial_state])
}

/// Deviation term `lipschitz * m * sqrt(2 T log(2 / delta))`. Delta above 2
/// would flip the logarithm negative and is rejected.
pub fn deviation_term(lipschitz: f64, m: f64, horizon: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 2.0) || !delta.is_finite() {
        return Err(Error::InvalidDelta { delta, max: 2.0 });
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument {
            what: "horizon",
            reason: "must be at least 1".to_string(),
        });
    }
    if !lipschitz.is_finite() || lipschitz < 0.0 || !m.is_finite() || m < 0.0 {
        return Err(Error::InvalidArgument {
            what: "deviation term",
            reason: format!("lipschitz = {lipschitz} and m = {m} must be finite and nonnegative"),
        });
    }
    Ok(lipschitz * m * (2.0 * horizon as f64 * (2.0 / delta).ln()).sqrt())
}

/// Assembles the certificate from its three ingredients.
pub fn check_certificate(
    empirical_loss: f64,
    deviation: f64,
    eps_sum: f64,
    delta: f64,
) -> Result<Certificate> {
    if !empirical_loss.is_finite() || !eps_sum.is_finite() || !deviation.is_finite() {
        return Err(Error::InvalidArgument {
            what: "certificate",
            reason: "inputs must be finite".to_string(),
        });
    }
    if deviation < 0.0 {
        return Err(Error::InvalidArgument {
            what: "certificate",
            reason: format!("deviation must be nonnegative, got {deviation}"),
        });
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidDelta { delta, max: 1.0 });
    }
    let margin = eps_sum - empirical_loss - deviation;
    Ok(Certificate {
        empirical_loss,
        deviation,
        eps_sum,
        delta,
        holds: margin > 0.0,
        margin,
    })
}

/// Exact E[psi] for a fixed comparator encoder sequence: the output
/// trajectory is autonomous, so the expectation reduces to the marginal laws,
/// `sum_t sum_y Pr[Y_t = y] * L[out_t][y]`, with the marginals advanced by
/// the transition matrix.
pub fn exact_expected_psi(
    process: &MarkovIntentionProcess,
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
    encoder_sequence: &[usize],
    initial_output: usize,
) -> Result<f64> {
    check_instance(process, loss, encoders, comparator)?;
    let states = comparator_trajectory(encoders, comparator, encoder_sequence, initial_output)?;
    let mut mu = process.initial().to_vec();
    let mut total = 0.0;
    for (t, &out) in states[1..].iter().enumerate() {
        if t > 0 {
            let mut next = vec![0.0; mu.len()];
            for (a, &mass) in mu.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (b, &p) in process.row(a).iter().enumerate() {
                    next[b] += mass * p;
                }
            }
            mu = next;
        }
        for (y, &mass) in mu.iter().enumerate() {
            total += mass * loss.get(out, y);
        }
    }
    Ok(total)
}

/// Samples `trials` intention sequences, computes psi for each against the
/// fixed comparator, and tabulates the empirical tail frequency of
/// `|psi - E[psi]| > eps` next to the theoretical bound
/// `2 exp(-eps^2 / (2 T lipschitz^2 M^2))` for every grid point. E[psi] is
/// the exact value, not an estimate; M comes from the exact Markov route.
/// Trial n draws with sub-stream n of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn validate_tail_bound(
    process: &MarkovIntentionProcess,
    loss: &LossMatrix,
    encoders: &FunctionClass,
    comparator: &[usize],
    encoder_sequence: &[usize],
    initial_output: usize,
    trials: usize,
    eps_grid: &[f64],
    seed: u64,
) -> Result<BoundValidationReport> {
    check_instance(process, loss, encoders, comparator)?;
    if trials == 0 {
        return Err(Error::InvalidArgument {
            what: "trials",
            reason: "must be at least 1".to_string(),
        });
    }
    if eps_grid.is_empty() {
        return Err(Error::InvalidArgument {
            what: "eps grid",
            reason: "must be nonempty".to_string(),
        });
    }
    if let Some(&bad) = eps_grid.iter().find(|&&e| e <= 0.0 || !e.is_finite()) {
        return Err(Error::InvalidArgument {
            what: "eps grid",
            reason: format!("every value must be positive and finite, got {bad}"),
        });
    }
    let horizon = encoder_sequence.len();
    if horizon == 0 {
        return Err(Error::InvalidArgument {
            what: "encoder sequence",
            reason: "must be nonempty".to_string(),
        });
    }

    let states = comparator_trajectory(encoders, comparator, encoder_sequence, initial_output)?;
    let expected = exact_expected_psi(
        process,
        loss,
        encoders,
        comparator,
        encoder_sequence,
        initial_output,
    )?;
    let lipschitz = lipschitz_constant(loss);
    let profile = mixing_profile(process, horizon, MixingMethod::ExactMarkov)?;
    let m = profile.m();

    let mut exceed_counts = vec![0usize; eps_grid.len()];
    for n in 0..trials {
        let y = sample_intentions(process, horizon, trial_seed(seed, n as u64))?;
        let psi = trajectory_loss(loss, &states[1..], &y)?;
        let dev = (psi - expected).abs();
        for (k, &eps) in eps_grid.iter().enumerate() {
            if dev > eps {
                exceed_counts[k] += 1;
            }
        }
    }

    let denom = 2.0 * horizon as f64 * lipschitz * lipschitz * m * m;
    let rows = eps_grid
        .iter()
        .zip(exceed_counts.iter())
        .map(|(&eps, &count)| {
            let frequency = count as f64 / trials as f64;
            let bound = if denom > 0.0 {
                2.0 * (-(eps * eps) / denom).exp()
            } else {
                // constant psi: the tail is empty for every positive eps
                0.0
            };
            BoundRow {
                eps,
                empirical_frequency: frequency,
                theoretical_bound: bound,
                trials,
                std_error: (frequency * (1.0 - frequency) / trials as f64).sqrt(),
            }
        })
        .collect();

    Ok(BoundValidationReport {
        rows,
        expected_psi: expected,
        lipschitz,
        m,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Alphabet, FeatureAlphabet};
    use crate::protocol::best_comparator_loss;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn process(initial: Vec<f64>, transition: Vec<Vec<f64>>) -> MarkovIntentionProcess {
        let n = initial.len();
        MarkovIntentionProcess::new(Alphabet::new(n).unwrap(), initial, transition).unwrap()
    }

    fn iid_uniform(n: usize) -> MarkovIntentionProcess {
        process(vec![1.0 / n as f64; n], vec![vec![1.0 / n as f64; n]; n])
    }

    fn encoder_class(ny: usize, nz: usize, tables: Vec<Vec<usize>>) -> FunctionClass {
        FunctionClass::encoder(
            &Alphabet::new(ny).unwrap(),
            &FeatureAlphabet::new(nz).unwrap(),
            tables,
        )
        .unwrap()
    }

    struct RandomInstance {
        process: MarkovIntentionProcess,
        loss: LossMatrix,
        encoders: FunctionClass,
        comparator: Vec<usize>,
    }

    fn random_instance(rng: &mut ChaCha8Rng, max_ny: usize, max_k: usize) -> RandomInstance {
        let ny = rng.gen_range(2..=max_ny);
        let nz = rng.gen_range(1..=3usize);
        let k = rng.gen_range(1..=max_k);
        let mut initial: Vec<f64> = (0..ny).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = initial.iter().sum();
        initial.iter_mut().for_each(|v| *v /= s);
        let transition: Vec<Vec<f64>> = (0..ny)
            .map(|_| {
                let mut row: Vec<f64> = (0..ny).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
                row
            })
            .collect();
        let loss = LossMatrix::new(
            (0..ny)
                .map(|_| (0..ny).map(|_| rng.gen_range(0.0..2.0)).collect())
                .collect(),
        )
        .unwrap();
        let tables: Vec<Vec<usize>> = (0..k)
            .map(|_| (0..ny).map(|_| rng.gen_range(0..nz)).collect())
            .collect();
        RandomInstance {
            process: process(initial, transition),
            loss,
            encoders: encoder_class(ny, nz, tables),
            comparator: (0..nz).map(|_| rng.gen_range(0..ny)).collect(),
        }
    }

    #[test]
    fn eps_t_zero_when_a_perfect_move_exists() {
        // next intention is symbol 1 for sure and some encoder reaches it
        let p = process(vec![1.0, 0.0], vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        let loss = LossMatrix::zero_one(2).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 0], vec![1, 1]]);
        let comparator = vec![0, 1];
        let v = eps_t(&p, &loss, &enc, &comparator, &[0], 0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn eps_t_half_for_singleton_class_uniform_law() {
        let p = iid_uniform(2);
        let loss = LossMatrix::zero_one(2).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 0]]);
        let comparator = vec![0, 1];
        let v = eps_t(&p, &loss, &enc, &comparator, &[], 0).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn eps_t_rejects_invalid_prefix() {
        let p = iid_uniform(2);
        let loss = LossMatrix::zero_one(2).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 1]]);
        assert!(eps_t(&p, &loss, &enc, &[0, 1], &[2], 0).is_err());
        assert!(eps_t(&p, &loss, &enc, &[0, 1], &[], 5).is_err());
    }

    // Oracle: enumerate every g and every next symbol, average losses, take
    // the minimum, with the same summation order as the implementation.
    fn eps_oracle(
        process: &MarkovIntentionProcess,
        loss: &LossMatrix,
        encoders: &FunctionClass,
        comparator: &[usize],
        y_prefix: &[usize],
        state: usize,
    ) -> f64 {
        let law: &[f64] = match y_prefix.last() {
            None => process.initial(),
            Some(&last) => process.row(last),
        };
        let mut best = f64::INFINITY;
        for g in 0..encoders.len() {
            let out = comparator[encoders.tables()[g][state]];
            let mut cost = 0.0;
            for (y, &p) in law.iter().enumerate() {
                cost += p * loss.get(out, y);
            }
            if cost < best {
                best = cost;
            }
        }
        best
    }

    #[test]
    fn eps_t_matches_enumeration_oracle_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..120 {
            let inst = random_instance(&mut rng, 3, 3);
            let t = rng.gen_range(1..=5usize);
            let prefix: Vec<usize> = (0..t - 1)
                .map(|_| rng.gen_range(0..inst.process.size()))
                .collect();
            let state = rng.gen_range(0..inst.process.size());
            let got = eps_t(
                &inst.process,
                &inst.loss,
                &inst.encoders,
                &inst.comparator,
                &prefix,
                state,
            )
            .unwrap();
            let want = eps_oracle(
                &inst.process,
                &inst.loss,
                &inst.encoders,
                &inst.comparator,
                &prefix,
                state,
            );
            assert_eq!(got, want);
        }
    }

    #[test]
    fn schedule_zero_on_trackable_copy_chain() {
        // copy chain from a point mass: next symbol always known, and the
        // class realizes any output from any state
        let p = process(vec![0.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let loss = LossMatrix::zero_one(2).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 0], vec![1, 1]]);
        let comparator = vec![0, 1];
        let schedule = eps_schedule(&p, &loss, &enc, &comparator, &[1, 1, 1, 1], 0).unwrap();
        assert_eq!(schedule.values, vec![0.0; 4]);
        assert_eq!(schedule.sum(), 0.0);
    }

    #[test]
    fn schedule_half_per_step_on_iid_uniform() {
        let p = iid_uniform(2);
        let loss = LossMatrix::zero_one(2).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 0], vec![1, 1]]);
        let comparator = vec![0, 1];
        let y = vec![0, 1, 1, 0, 1, 0];
        let schedule = eps_schedule(&p, &loss, &enc, &comparator, &y, 0).unwrap();
        assert_eq!(schedule.values, vec![0.5; 6]);
        assert_eq!(schedule.sum(), 3.0);
        // every value within the loss range
        for &v in &schedule.values {
            assert!(v >= 0.0 && v <= loss.range_bound());
        }
    }

    #[test]
    fn schedule_matches_per_step_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..40 {
            let inst = random_instance(&mut rng, 3, 3);
            let t = rng.gen_range(1..=5usize);
            let y: Vec<usize> = (0..t)
                .map(|_| rng.gen_range(0..inst.process.size()))
                .collect();
            let start = rng.gen_range(0..inst.process.size());
            let schedule = eps_schedule(
                &inst.process,
                &inst.loss,
                &inst.encoders,
                &inst.comparator,
                &y,
                start,
            )
            .unwrap();
            for (t0, &value) in schedule.values.iter().enumerate() {
                let want = eps_oracle(
                    &inst.process,
                    &inst.loss,
                    &inst.encoders,
                    &inst.comparator,
                    &y[..t0],
                    schedule.states[t0],
                );
                assert_eq!(value, want);
            }
        }
    }

    #[test]
    fn deviation_term_basics() {
        assert_eq!(deviation_term(0.0, 3.0, 10, 0.1).unwrap(), 0.0);
        assert_eq!(deviation_term(1.0, 1.0, 10, 2.0).unwrap(), 0.0);
        // log(2 / (2/e)) = 1, so the value is sqrt(2 * 2) = 2
        let v = deviation_term(1.0, 1.0, 2, 2.0 / std::f64::consts::E).unwrap();
        assert!((v - 2.0).abs() < 1e-12, "v = {v}");
        assert!(deviation_term(1.0, 1.0, 10, 0.0).is_err());
        assert!(deviation_term(1.0, 1.0, 10, 2.5).is_err());
        assert!(deviation_term(-1.0, 1.0, 10, 0.5).is_err());
        assert!(deviation_term(1.0, 1.0, 0, 0.5).is_err());
    }

    #[test]
    fn deviation_term_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let l = rng.gen_range(0.0..3.0);
            let m = rng.gen_range(0.0..4.0);
            let t = rng.gen_range(1..50usize);
            let d = rng.gen_range(0.01..1.0);
            let base = deviation_term(l, m, t, d).unwrap();
            assert!(deviation_term(l + 0.5, m, t, d).unwrap() >= base);
            assert!(deviation_term(l, m + 0.5, t, d).unwrap() >= base);
            assert!(deviation_term(l, m, t + 5, d).unwrap() >= base);
            assert!(deviation_term(l, m, t, (d + 0.5).min(1.0)).unwrap() <= base);
        }
    }

    #[test]
    fn certificate_basics() {
        let c = check_certificate(0.0, 0.5, 1.0, 0.1).unwrap();
        assert!(c.holds);
        assert_eq!(c.margin, 0.5);
        // equality fails the strict inequality
        let c = check_certificate(0.5, 0.5, 1.0, 0.1).unwrap();
        assert!(!c.holds);
        assert_eq!(c.margin, 0.0);
        assert!(check_certificate(f64::NAN, 0.0, 1.0, 0.1).is_err());
        assert!(check_certificate(0.0, -0.1, 1.0, 0.1).is_err());
        assert!(check_certificate(0.0, 0.1, 1.0, 1.5).is_err());
    }

    #[test]
    fn expected_psi_deterministic_process() {
        let p = process(vec![1.0, 0.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let loss = LossMatrix::zero_one(2).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 1]]);
        let comparator = vec![0, 1];
        let sequence = vec![0, 0, 0, 0];
        let e = exact_expected_psi(&p, &loss, &enc, &comparator, &sequence, 0).unwrap();
        // the single realizable intention sequence is (0, 1, 0, 1)
        let states = comparator_trajectory(&enc, &comparator, &sequence, 0).unwrap();
        let psi = trajectory_loss(&loss, &states[1..], &[0, 1, 0, 1]).unwrap();
        assert_eq!(e, psi);
    }

    #[test]
    fn expected_psi_iid_uniform_is_half_horizon() {
        let p = iid_uniform(2);
        let loss = LossMatrix::zero_one(2).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 1], vec![1, 0]]);
        let comparator = vec![0, 1];
        for sequence in [vec![0, 0, 0], vec![1, 0, 1], vec![0, 1, 1]] {
            let e = exact_expected_psi(&p, &loss, &enc, &comparator, &sequence, 0).unwrap();
            assert!((e - 1.5).abs() < 1e-12);
        }
    }

    // Monte Carlo oracle: the sample mean of psi over 1e5 draws lies within
    // 4 standard errors of the exact expectation.
    #[test]
    fn expected_psi_matches_monte_carlo() {
        let p = process(vec![0.6, 0.4], vec![vec![0.7, 0.3], vec![0.2, 0.8]]);
        let loss = LossMatrix::new(vec![vec![0.1, 1.3], vec![0.9, 0.2]]).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 1], vec![1, 0]]);
        let comparator = vec![1, 0];
        let sequence = vec![0, 1, 1, 0, 0, 1];
        let exact = exact_expected_psi(&p, &loss, &enc, &comparator, &sequence, 1).unwrap();

        let states = comparator_trajectory(&enc, &comparator, &sequence, 1).unwrap();
        let n = 100_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for trial in 0..n {
            let y = sample_intentions(&p, 6, trial_seed(77, trial as u64)).unwrap();
            let psi = trajectory_loss(&loss, &states[1..], &y).unwrap();
            sum += psi;
            sum_sq += psi * psi;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 4.0 * se,
            "mean = {mean}, exact = {exact}, se = {se}"
        );
    }

    #[test]
    fn tail_bound_constant_loss_has_empty_tail() {
        let p = iid_uniform(2);
        let loss = LossMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 1]]);
        let comparator = vec![0, 1];
        let report = validate_tail_bound(
            &p,
            &loss,
            &enc,
            &comparator,
            &[0, 0, 0, 0],
            0,
            500,
            &[0.1, 1.0],
            3,
        )
        .unwrap();
        for row in &report.rows {
            assert_eq!(row.empirical_frequency, 0.0);
        }
    }

    #[test]
    fn tail_bound_column_is_the_formula() {
        let p = process(vec![0.5, 0.5], vec![vec![0.7, 0.3], vec![0.3, 0.7]]);
        let loss = LossMatrix::zero_one(2).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 1]]);
        let comparator = vec![0, 1];
        let grid = [0.5, 1.0, 2.0, 4.0];
        let report =
            validate_tail_bound(&p, &loss, &enc, &comparator, &[0; 8], 0, 200, &grid, 9).unwrap();
        let denom = 2.0 * 8.0 * report.lipschitz.powi(2) * report.m.powi(2);
        for row in &report.rows {
            let expected = 2.0 * (-(row.eps * row.eps) / denom).exp();
            assert_eq!(row.theoretical_bound, expected);
            assert!(row.empirical_frequency >= 0.0 && row.empirical_frequency <= 1.0);
        }
        assert!(
            validate_tail_bound(&p, &loss, &enc, &comparator, &[0; 8], 0, 200, &[0.0], 9).is_err()
        );
        assert!(
            validate_tail_bound(&p, &loss, &enc, &comparator, &[0; 8], 0, 0, &grid, 9).is_err()
        );
    }

    // With 0/1 loss the step infimum is positive exactly when no encoder
    // maps the state to an outcome of conditional probability 1.
    #[test]
    fn positivity_condition_for_zero_one_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..60 {
            let ny = rng.gen_range(2..=3usize);
            let nz = rng.gen_range(1..=3usize);
            let k = rng.gen_range(1..=3usize);
            // deterministic rows so that conditional probability 1 happens
            let mut transition = vec![vec![0.0; ny]; ny];
            for row in transition.iter_mut() {
                row[rng.gen_range(0..ny)] = 1.0;
            }
            let mut initial = vec![0.0; ny];
            initial[rng.gen_range(0..ny)] = 1.0;
            let p = process(initial, transition);
            let loss = LossMatrix::zero_one(ny).unwrap();
            let tables: Vec<Vec<usize>> = (0..k)
                .map(|_| (0..ny).map(|_| rng.gen_range(0..nz)).collect())
                .collect();
            let enc = encoder_class(ny, nz, tables);
            let comparator: Vec<usize> = (0..nz).map(|_| rng.gen_range(0..ny)).collect();
            let state = rng.gen_range(0..ny);
            let prefix: Vec<usize> = if rng.gen() {
                vec![rng.gen_range(0..ny)]
            } else {
                vec![]
            };

            let law: Vec<f64> = match prefix.last() {
                None => p.initial().to_vec(),
                Some(&s) => p.row(s).to_vec(),
            };
            let certain = (0..ny).find(|&y| law[y] == 1.0);
            let reaches_certain = certain.is_some_and(|target| {
                (0..enc.len()).any(|g| comparator[enc.tables()[g][state]] == target)
            });
            let v = eps_t(&p, &loss, &enc, &comparator, &prefix, state).unwrap();
            if reaches_certain {
                assert_eq!(v, 0.0);
            } else {
                assert!(v > 0.0, "law = {law:?}");
            }
        }
    }

    // The per-step floor sum never exceeds the exact sequence minimum under
    // the shared predictive costs.
    #[test]
    fn floor_sum_below_sequence_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..120 {
            let inst = random_instance(&mut rng, 3, 3);
            let t = rng.gen_range(1..=5usize);
            let y: Vec<usize> = (0..t)
                .map(|_| rng.gen_range(0..inst.process.size()))
                .collect();
            let start = rng.gen_range(0..inst.process.size());
            let floors = eps_floor_schedule(
                &inst.process,
                &inst.loss,
                &inst.encoders,
                &inst.comparator,
                &y,
                start,
            )
            .unwrap();
            let best = min_predictive_comparator_loss(
                &inst.process,
                &inst.loss,
                &inst.encoders,
                &inst.comparator,
                &y,
                start,
            )
            .unwrap();
            let floor_sum: f64 = floors.iter().sum();
            assert!(
                floor_sum <= best + 1e-12,
                "floor_sum = {floor_sum}, best = {best}"
            );
            // the greedy schedule sits on reachable states, so it dominates
            // the floor pointwise
            let greedy = eps_schedule(
                &inst.process,
                &inst.loss,
                &inst.encoders,
                &inst.comparator,
                &y,
                start,
            )
            .unwrap();
            for (f, g) in floors.iter().zip(greedy.values.iter()) {
                assert!(f <= g);
            }
        }
    }

    // A locally best first step can trap the greedy comparator in a state
    // with poor continuations, pushing its sum above the sequence optimum;
    // the floor schedule is immune by construction.
    #[test]
    fn greedy_schedule_can_exceed_sequence_optimum() {
        let p = process(
            vec![0.0, 1.0, 0.0],
            vec![
                vec![0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0],
            ],
        );
        let loss = LossMatrix::zero_one(3).unwrap();
        // from state 0 the class reaches outputs {1, 2}; from 1 only {1};
        // from 2 only {2}
        let enc = encoder_class(3, 3, vec![vec![1, 1, 2], vec![2, 1, 2]]);
        let comparator = vec![0, 1, 2];
        let y = vec![1, 2, 2];
        let greedy = eps_schedule(&p, &loss, &enc, &comparator, &y, 0).unwrap();
        let floors = eps_floor_schedule(&p, &loss, &enc, &comparator, &y, 0).unwrap();
        let best = min_predictive_comparator_loss(&p, &loss, &enc, &comparator, &y, 0).unwrap();
        assert_eq!(greedy.values, vec![0.0, 1.0, 1.0]);
        assert_eq!(best, 1.0);
        assert!(greedy.sum() > best);
        assert!(floors.iter().sum::<f64>() <= best);
    }

    // Tail chain of the certificate argument: the realized hindsight-best
    // comparator loss stays above eps_sum - deviation with frequency at
    // least 1 - delta on a well-mixing instance.
    #[test]
    fn comparator_loss_rarely_undershoots_eps_sum_minus_deviation() {
        let p = process(vec![0.9, 0.1], vec![vec![0.9, 0.1], vec![0.9, 0.1]]);
        let loss = LossMatrix::zero_one(2).unwrap();
        let enc = encoder_class(2, 2, vec![vec![0, 0], vec![1, 1]]);
        // comparator decoder collapses everything to symbol 1
        let comparator = vec![1, 1];
        let horizon = 60;
        let delta = 0.1;
        let lipschitz = lipschitz_constant(&loss);
        let profile = mixing_profile(&p, horizon, MixingMethod::ExactMarkov).unwrap();
        let dev = deviation_term(lipschitz, profile.m(), horizon, delta).unwrap();

        let trials = 2000usize;
        let mut ok = 0usize;
        for trial in 0..trials {
            let y = sample_intentions(&p, horizon, trial_seed(123, trial as u64)).unwrap();
            let (comp_min, _) = best_comparator_loss(&y, &enc, &comparator, 0, &loss).unwrap();
            let schedule = eps_schedule(&p, &loss, &enc, &comparator, &y, 0).unwrap();
            if comp_min >= schedule.sum() - dev {
                ok += 1;
            }
        }
        let frequency = ok as f64 / trials as f64;
        assert!(frequency >= 1.0 - delta, "frequency = {frequency}");
    }
}
