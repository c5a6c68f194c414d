//! Domain model: finite symbol spaces, Markov intention processes, loss
//! tables, and lookup-table function classes.
//!
//! Conventions used across the crate:
//! - symbols are `usize` indices into an alphabet of size n
//! - probability vectors sum to 1 within [`PROB_TOL`]
//! - loss tables are indexed `loss[prediction][intention]`
//! - every type is immutable after construction, so values can be shared
//!   freely across threads

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance for stochasticity checks (double-precision row normalization).
pub const PROB_TOL: f64 = 1e-12;

/// Finite intention alphabet. Symbols are the indices `0..size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    size: usize,
    labels: Option<Vec<String>>,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidArgument {
                what: "alphabet",
                reason: format!("size must be at least 2, got {size}"),
            });
        }
        Ok(Self { size, labels: None })
    }

    /// Attaches display names, one per symbol, all distinct.
    pub fn with_labels(size: usize, labels: Vec<String>) -> Result<Self> {
        let mut alphabet = Self::new(size)?;
        if labels.len() != size {
            return Err(Error::InvalidArgument {
                what: "alphabet labels",
                reason: format!("expected {size} labels, got {}", labels.len()),
            });
        }
        let distinct: std::collections::BTreeSet<&str> =
            labels.iter().map(|s| s.as_str()).collect();
        if distinct.len() != labels.len() {
            return Err(Error::InvalidArgument {
                what: "alphabet labels",
                reason: "labels must be distinct".to_string(),
            });
        }
        alphabet.labels = Some(labels);
        Ok(alphabet)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }
}

/// Finite feature space the encoder maps into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureAlphabet {
    size: usize,
}

impl FeatureAlphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument {
                what: "feature alphabet",
                reason: "size must be at least 1".to_string(),
            });
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// First-order Markov law of the intention sequence: an initial distribution
/// over symbols and a row-stochastic transition matrix, with
/// `transition[a][b] = Pr[y_{t+1} = b | y_t = a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovIntentionProcess {
    alphabet: Alphabet,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
}

impl MarkovIntentionProcess {
    /// Builds a validated process; all violated invariants are reported at
    /// once.
    pub fn new(alphabet: Alphabet, initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let violations = Self::violations(alphabet.size(), &initial, &transition);
        if violations.is_empty() {
            Ok(Self {
                alphabet,
                initial,
                transition,
            })
        } else {
            Err(Error::InvalidProcess { violations })
        }
    }

    /// Checks the stochasticity invariants and returns every violation found
    /// (empty means valid).
    pub fn violations(size: usize, initial: &[f64], transition: &[Vec<f64>]) -> Vec<String> {
        let mut out = Vec::new();
        if initial.len() != size {
            out.push(format!(
                "initial has length {}, expected {size}",
                initial.len()
            ));
        }
        for (k, &p) in initial.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                out.push(format!("initial[{k}] = {p} is not in [0, 1]"));
            }
        }
        if initial.len() == size {
            let sum: f64 = initial.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                out.push(format!("initial sums to {sum}"));
            }
        }
        if transition.len() != size {
            out.push(format!(
                "transition has {} rows, expected {size}",
                transition.len()
            ));
        }
        for (r, row) in transition.iter().enumerate() {
            if row.len() != size {
                out.push(format!(
                    "transition row {r} has length {}, expected {size}",
                    row.len()
                ));
                continue;
            }
            for (c, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    out.push(format!("transition[{r}][{c}] = {p} is not in [0, 1]"));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                out.push(format!("transition row {r} sums to {sum}"));
            }
        }
        out
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn size(&self) -> usize {
        self.alphabet.size()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.transition[state]
    }
}

/// Samples one intention sequence of length `horizon`. The first symbol is
/// drawn from the initial distribution, each later symbol from the transition
/// row of its predecessor. Identical seeds reproduce identical sequences.
pub fn sample_intentions(
    process: &MarkovIntentionProcess,
    horizon: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument {
            what: "horizon",
            reason: "must be at least 1".to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = WeightedIndex::new(process.initial()).expect("validated initial distribution");
    let rows: Vec<WeightedIndex<f64>> = process
        .transition()
        .iter()
        .map(|row| WeightedIndex::new(row).expect("validated transition row"))
        .collect();
    let mut sequence = Vec::with_capacity(horizon);
    let mut state = first.sample(&mut rng);
    sequence.push(state);
    for _ in 1..horizon {
        state = rows[state].sample(&mut rng);
        sequence.push(state);
    }
    Ok(sequence)
}

/// Number of positions at which two equal-length sequences differ.
pub fn hamming_distance(x: &[usize], y: &[usize]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(x.iter().zip(y.iter()).filter(|(a, b)| a != b).count())
}

/// Nonnegative loss table, `values[prediction][intention]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    values: Vec<Vec<f64>>,
    range_bound: f64,
}

impl LossMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let side = values.len();
        if side == 0 {
            return Err(Error::InvalidArgument {
                what: "loss matrix",
                reason: "must be nonempty".to_string(),
            });
        }
        let mut range_bound = 0.0f64;
        for (r, row) in values.iter().enumerate() {
            if row.len() != side {
                return Err(Error::InvalidArgument {
                    what: "loss matrix",
                    reason: format!("row {r} has length {}, expected {side}", row.len()),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument {
                        what: "loss matrix",
                        reason: format!("entry [{r}][{c}] = {v} must be finite and nonnegative"),
                    });
                }
                if v > range_bound {
                    range_bound = v;
                }
            }
        }
        Ok(Self {
            values,
            range_bound,
        })
    }

    /// Convenience 0/1 loss: 0 on the diagonal, 1 elsewhere.
    pub fn zero_one(side: usize) -> Result<Self> {
        let values = (0..side)
            .map(|a| (0..side).map(|b| if a == b { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::new(values)
    }

    pub fn side(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, prediction: usize, intention: usize) -> f64 {
        self.values[prediction][intention]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Largest entry; every per-step loss lies in `[0, range_bound]`.
    pub fn range_bound(&self) -> f64 {
        self.range_bound
    }
}

/// Tightest constant bounding how much a comparator loss total can move when
/// a single intention symbol is flipped:
/// `max over (a, b, b') of |L[a][b] - L[a][b']|`.
///
/// The comparator output sequence never reads the intentions, so flipping one
/// intention changes exactly one summand of the total, and that summand moves
/// by at most this constant.
pub fn lipschitz_constant(loss: &LossMatrix) -> f64 {
    let n = loss.side();
    let mut best = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            for b2 in 0..n {
                let d = (loss.get(a, b) - loss.get(a, b2)).abs();
                if d > best {
                    best = d;
                }
            }
        }
    }
    best
}

/// Whether a function class maps intentions to features (encoder) or
/// features back to intentions (decoder).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassKind {
    Encoder,
    Decoder,
}

/// Finite family of total lookup tables between two finite alphabets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionClass {
    kind: ClassKind,
    input_size: usize,
    output_size: usize,
    tables: Vec<Vec<usize>>,
}

impl FunctionClass {
    pub fn new(
        kind: ClassKind,
        input_size: usize,
        output_size: usize,
        tables: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if input_size == 0 || output_size == 0 {
            return Err(Error::InvalidArgument {
                what: "function class",
                reason: "input and output alphabets must be nonempty".to_string(),
            });
        }
        if tables.is_empty() {
            return Err(Error::InvalidArgument {
                what: "function class",
                reason: "must contain at least one table".to_string(),
            });
        }
        for (t, table) in tables.iter().enumerate() {
            if table.len() != input_size {
                return Err(Error::InvalidArgument {
                    what: "function class",
                    reason: format!(
                        "table {t} has {} entries, expected {input_size}",
                        table.len()
                    ),
                });
            }
            for (s, &out) in table.iter().enumerate() {
                if out >= output_size {
                    return Err(Error::InvalidArgument {
                        what: "function class",
                        reason: format!(
                            "table {t} maps symbol {s} to {out}, outside output alphabet of size {output_size}"
                        ),
                    });
                }
            }
        }
        Ok(Self {
            kind,
            input_size,
            output_size,
            tables,
        })
    }

    pub fn encoder(
        alphabet: &Alphabet,
        features: &FeatureAlphabet,
        tables: Vec<Vec<usize>>,
    ) -> Result<Self> {
        Self::new(ClassKind::Encoder, alphabet.size(), features.size(), tables)
    }

    pub fn decoder(
        features: &FeatureAlphabet,
        alphabet: &Alphabet,
        tables: Vec<Vec<usize>>,
    ) -> Result<Self> {
        Self::new(ClassKind::Decoder, features.size(), alphabet.size(), tables)
    }

    pub fn kind(&self) -> ClassKind {
        self.kind
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    /// Number of tables in the class.
    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn table(&self, index: usize) -> Result<&[usize]> {
        self.tables
            .get(index)
            .map(|t| t.as_slice())
            .ok_or(Error::IndexOutOfBounds {
                what: "function class table",
                index,
                len: self.tables.len(),
            })
    }

    pub fn tables(&self) -> &[Vec<usize>] {
        &self.tables
    }
}

/// Table of the composition `a -> decoder[encoder[a]]`. The encoder's outputs
/// must land inside the decoder's input alphabet.
pub fn compose(decoder: &[usize], encoder: &[usize]) -> Result<Vec<usize>> {
    for &z in encoder {
        if z >= decoder.len() {
            return Err(Error::AlphabetMismatch {
                context: format!(
                    "encoder output {z} outside decoder domain of size {}",
                    decoder.len()
                ),
            });
        }
    }
    Ok(encoder.iter().map(|&z| decoder[z]).collect())
}
