//! Mixing coefficients for dependent intention sequences.
//!
//! For a sequence (Y_1, ..., Y_T), the coefficient eta(i, j) measures how far
//! the conditional law of the future block (Y_j, ..., Y_T) can move, in total
//! variation, when the symbol at position i is swapped while the prefix
//! before it is held fixed. The profile aggregates the coefficients into
//!
//! ```text
//! M = max_t ( 1 + eta(t, t+1) + ... + eta(t, T) )
//! ```
//!
//! the dependence factor that inflates the concentration bound. M = 1
//! recovers the independent case; M = T is the worst case (a chain that
//! copies its state forever).
//!
//! Two routes are provided:
//!
//! - [`eta_bar_markov`]: exact for Markov chains. Conditional block laws
//!   share the transition kernel from time j on, so the block distance
//!   collapses to the distance between the time-j conditionals, i.e. between
//!   rows of the (j - i)-step transition matrix.
//! - [`eta_bar_bruteforce`]: definitional enumeration over every
//!   positive-probability history, comparing full block laws. It is the
//!   oracle the exact route is validated against, and is guarded to desk
//!   scale.
//!
//! The two differ on one point. The supremum in the definition ranges over
//! symbol pairs that are jointly reachable after a common
//! positive-probability prefix, and the enumeration honors that literally.
//! The Markov route admits any pair of symbols with positive marginal
//! probability at time i, a superset, so on chains with degenerate support it
//! can only over-estimate eta (and hence M), keeping downstream deviation
//! bounds conservative. On chains with strictly positive transition entries
//! the two pair sets coincide and the routes agree exactly.

use crate::error::{Error, Result};
use crate::model::MarkovIntentionProcess;

/// Normalization tolerance accepted by [`tv_distance`].
pub const TV_INPUT_TOL: f64 = 1e-9;

/// Row-sum drift tolerated (and silently renormalized) when taking powers of
/// a stochastic matrix; anything larger is treated as a modeling bug.
pub const DRIFT_TOL: f64 = 1e-12;

/// Guard on the brute-force enumeration: at most this many sequences.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// Total variation distance between two probability vectors, half the L1
/// distance. Inputs must have equal length and each sum to 1 within
/// [`TV_INPUT_TOL`].
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let sp: f64 = p.iter().sum();
    if (sp - 1.0).abs() > TV_INPUT_TOL {
        return Err(Error::NotNormalized {
            which: "p",
            sum: sp,
        });
    }
    let sq: f64 = q.iter().sum();
    if (sq - 1.0).abs() > TV_INPUT_TOL {
        return Err(Error::NotNormalized {
            which: "q",
            sum: sq,
        });
    }
    Ok(0.5
        * p.iter()
            .zip(q.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// mu' = mu * P, entries accumulated in ascending source order.
fn propagate(mu: &[f64], transition: &[Vec<f64>]) -> Vec<f64> {
    let n = mu.len();
    let mut out = vec![0.0; n];
    for (a, &mass) in mu.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for b in 0..n {
            out[b] += mass * transition[a][b];
        }
    }
    out
}

/// k-step transition matrix by repeated multiplication. Each product row is
/// renormalized when its sum drifts from 1 by at most [`DRIFT_TOL`]; larger
/// drift is an error rather than silently hidden.
fn transition_power(transition: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    let mut power = transition.to_vec();
    for _ in 1..k {
        power = multiply_checked(&power, transition)?;
    }
    Ok(power)
}

fn multiply_checked(left: &[Vec<f64>], right: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = left.len();
    let mut out = vec![vec![0.0; n]; n];
    for r in 0..n {
        for (mid, &w) in left[r].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for c in 0..n {
                out[r][c] += w * right[mid][c];
            }
        }
        let sum: f64 = out[r].iter().sum();
        if (sum - 1.0).abs() > DRIFT_TOL {
            return Err(Error::StochasticDrift { row: r, sum });
        }
        for v in out[r].iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Symbols with positive marginal probability at time t (1-based).
fn reachable_at(process: &MarkovIntentionProcess, t: usize) -> Vec<usize> {
    let mut mu = process.initial().to_vec();
    for _ in 1..t {
        mu = propagate(&mu, process.transition());
    }
    (0..mu.len()).filter(|&s| mu[s] > 0.0).collect()
}

fn max_pairwise_row_tv(rows: &[Vec<f64>], symbols: &[usize]) -> Result<f64> {
    let mut best = 0.0f64;
    for (pos, &w) in symbols.iter().enumerate() {
        for &v in &symbols[pos + 1..] {
            let d = tv_distance(&rows[w], &rows[v])?;
            if d > best {
                best = d;
            }
        }
    }
    Ok(best)
}

/// Exact Markov mixing coefficient eta(i, j) for 1 <= i < j: the largest
/// total variation distance between rows of the (j - i)-step transition
/// matrix, over symbol pairs with positive marginal probability at time i.
/// Fewer than two reachable symbols leave no admissible pair and yield 0.
pub fn eta_bar_markov(process: &MarkovIntentionProcess, i: usize, j: usize) -> Result<f64> {
    if i < 1 || j <= i {
        return Err(Error::IndexOrder { i, j });
    }
    let reachable = reachable_at(process, i);
    let power = transition_power(process.transition(), j - i)?;
    max_pairwise_row_tv(&power, &reachable)
}

/// Definitional eta(i, j) by full enumeration of the joint law over
/// `horizon`-length sequences: conditions the block (Y_j, ..., Y_T) on every
/// positive-probability length-i prefix and takes the supremum of block total
/// variation distances over symbol pairs sharing a prefix. Guarded to
/// `|Y|^T <= 10^6`.
pub fn eta_bar_bruteforce(
    process: &MarkovIntentionProcess,
    i: usize,
    j: usize,
    horizon: usize,
) -> Result<f64> {
    if i < 1 || j <= i || j > horizon {
        return Err(Error::IndexOrder { i, j });
    }
    let n = process.size();
    let total = (n as u64).checked_pow(horizon as u32);
    match total {
        Some(t) if t <= ENUMERATION_LIMIT => {}
        _ => {
            return Err(Error::EnumerationTooLarge {
                states: n,
                horizon,
                limit: ENUMERATION_LIMIT,
            })
        }
    }

    let prefix_count = n.pow((i - 1) as u32);
    let block_count = n.pow((horizon - j + 1) as u32);
    // Conditional block mass per (prefix, symbol-at-i), filled by walking the
    // full joint law in lexicographic sequence order.
    let mut block_mass = vec![vec![0.0f64; block_count]; prefix_count * n];
    let mut cond_total = vec![0.0f64; prefix_count * n];

    let mut seq = vec![0usize; horizon];
    loop {
        let mut prob = process.initial()[seq[0]];
        for t in 1..horizon {
            if prob == 0.0 {
                break;
            }
            prob *= process.transition()[seq[t - 1]][seq[t]];
        }
        if prob > 0.0 {
            let mut prefix_code = 0usize;
            for &s in &seq[..i - 1] {
                prefix_code = prefix_code * n + s;
            }
            let mut block_code = 0usize;
            for &s in &seq[j - 1..] {
                block_code = block_code * n + s;
            }
            let slot = prefix_code * n + seq[i - 1];
            block_mass[slot][block_code] += prob;
            cond_total[slot] += prob;
        }
        // odometer over sequences, last position fastest
        let mut pos = horizon;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            seq[pos] += 1;
            if seq[pos] < n {
                break;
            }
            seq[pos] = 0;
        }
        if pos == 0 && seq[0] == 0 {
            break;
        }
    }

    let mut best = 0.0f64;
    for prefix_code in 0..prefix_count {
        for w in 0..n {
            let slot_w = prefix_code * n + w;
            if cond_total[slot_w] == 0.0 {
                continue;
            }
            for v in (w + 1)..n {
                let slot_v = prefix_code * n + v;
                if cond_total[slot_v] == 0.0 {
                    continue;
                }
                let law_w: Vec<f64> = block_mass[slot_w]
                    .iter()
                    .map(|m| m / cond_total[slot_w])
                    .collect();
                let law_v: Vec<f64> = block_mass[slot_v]
                    .iter()
                    .map(|m| m / cond_total[slot_v])
                    .collect();
                let d = tv_distance(&law_w, &law_v)?;
                if d > best {
                    best = d;
                }
            }
        }
    }
    Ok(best)
}

/// Which route fills the eta matrix of a [`MixingProfile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingMethod {
    ExactMarkov,
    BruteForce,
}

/// All eta(i, j) for 1 <= i < j <= T plus the derived dependence factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingProfile {
    horizon: usize,
    // eta[i - 1][j - i - 1] = eta(i, j)
    eta: Vec<Vec<f64>>,
    row_factors: Vec<f64>,
    m: f64,
}

impl MixingProfile {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// eta(i, j) for 1 <= i < j <= horizon.
    pub fn eta(&self, i: usize, j: usize) -> Option<f64> {
        if i < 1 || j <= i || j > self.horizon {
            return None;
        }
        Some(self.eta[i - 1][j - i - 1])
    }

    /// Per-start factors `1 + sum_{j > t} eta(t, j)`, indexed by t - 1.
    pub fn row_factors(&self) -> &[f64] {
        &self.row_factors
    }

    /// Dependence factor M: the maximum row factor. Lies in [1, T].
    pub fn m(&self) -> f64 {
        self.m
    }

    /// All (i, j, eta) entries, i ascending then j ascending.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.eta.iter().enumerate().flat_map(|(i0, row)| {
            row.iter()
                .enumerate()
                .map(move |(off, &v)| (i0 + 1, i0 + 2 + off, v))
        })
    }
}

/// Fills the full eta matrix with the selected method and derives the
/// per-start sums and their maximum.
pub fn mixing_profile(
    process: &MarkovIntentionProcess,
    horizon: usize,
    method: MixingMethod,
) -> Result<MixingProfile> {
    if horizon == 0 {
        return Err(Error::InvalidArgument {
            what: "horizon",
            reason: "must be at least 1".to_string(),
        });
    }
    let mut eta: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    match method {
        MixingMethod::ExactMarkov => {
            // marginal supports once per start time
            let mut mu = process.initial().to_vec();
            let mut reachable: Vec<Vec<usize>> = Vec::with_capacity(horizon);
            for t in 1..=horizon {
                if t > 1 {
                    mu = propagate(&mu, process.transition());
                }
                reachable.push((0..mu.len()).filter(|&s| mu[s] > 0.0).collect());
            }
            // powers incrementally by lag
            let mut power = process.transition().to_vec();
            for lag in 1..horizon {
                if lag > 1 {
                    power = multiply_checked(&power, process.transition())?;
                }
                for i in 1..=(horizon - lag) {
                    let value = max_pairwise_row_tv(&power, &reachable[i - 1])?;
                    eta[i - 1].push(value);
                }
            }
        }
        MixingMethod::BruteForce => {
            for i in 1..horizon {
                for j in (i + 1)..=horizon {
                    eta[i - 1].push(eta_bar_bruteforce(process, i, j, horizon)?);
                }
            }
        }
    }
    let row_factors: Vec<f64> = eta
        .iter()
        .map(|row| 1.0 + row.iter().sum::<f64>())
        .collect();
    let m = row_factors.iter().cloned().fold(f64::MIN, f64::max);
    Ok(MixingProfile {
        horizon,
        eta,
        row_factors,
        m,
    })
}
