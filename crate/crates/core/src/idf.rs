//! Desk-scale identification coding scheme with feedback.
//!
//! The scheme splits a block of `m = n + ceil(sqrt(n))` channel uses into a
//! common-randomness phase and a color phase. For the first `n` uses every
//! sender transmits a fixed sensing-optimal input; the fed-back output block
//! `y^n` is the common randomness. Each sender then hashes `y^n` through a
//! keyed coloring function selected by its identity and transmits the
//! resulting color with a short transmission code of length
//! `ceil(sqrt(n))`. The receiver tests a claimed identity tuple by checking
//! the claimed colors against the decoded ones.
//!
//! Everything here is exact and deterministic given its inputs: the color
//! transmission code is built greedily with exact maximum-likelihood error
//! accounting, and the coloring functions are a fixed 64-bit mixing chain
//! whose constants are part of the crate's compatibility contract.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde_json::{Map, Value};

use crate::channel::{sample_categorical, AveragedChannel, SdMacSpec, TupleSpace};
use crate::error::{Error, Result};
use crate::estimator::{
    distribution_distortion, symbol_distortion, validate_distribution, InputModel,
};
use crate::region::{
    admissible_tuples, deterministic_bound, product_output, randomized_bound,
    symbol_tuple_distortions, Achiever, OptConfig,
};
use crate::scalar::Real;

/// Desk-scale cap on exactly enumerated output sequences and on candidate
/// codewords scanned by the greedy packer.
const MAX_EXACT_SEQUENCES: u128 = 1 << 22;

/// Smallest integer whose square is at least `n`.
pub fn ceil_sqrt(n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r >= 1 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Letter-typicality test: a block is typical when every output symbol's
/// empirical frequency is within `eps` of the reference probability.
#[derive(Clone, Debug, PartialEq)]
pub struct TypicalityTest<R> {
    n: usize,
    eps: R,
    reference: Vec<R>,
}

impl<R: Real> TypicalityTest<R> {
    /// Builds a test against a reference distribution over the output
    /// alphabet.
    pub fn new(n: usize, eps: R, reference: Vec<R>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "typicality blocklength must be positive".into(),
            ));
        }
        if !(eps >= R::zero()) {
            return Err(Error::InvalidParameter(format!(
                "typicality tolerance must be nonnegative, got {eps}"
            )));
        }
        let size = reference.len();
        validate_distribution(&reference, size, "typicality reference")?;
        Ok(TypicalityTest { n, eps, reference })
    }

    /// Blocklength the test applies to.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Frequency tolerance.
    pub fn eps(&self) -> R {
        self.eps
    }

    /// Reference output distribution.
    pub fn reference(&self) -> &[R] {
        &self.reference
    }

    /// Checks letter-typicality of a block.
    pub fn is_typical(&self, y: &[usize]) -> Result<bool> {
        if y.len() != self.n {
            return Err(Error::LengthMismatch {
                what: "typicality block".into(),
                expected: self.n,
                got: y.len(),
            });
        }
        let mut counts = vec![0usize; self.reference.len()];
        for &sym in y {
            if sym >= counts.len() {
                return Err(Error::IndexOutOfAlphabet {
                    axis: "output".into(),
                    index: sym,
                    size: counts.len(),
                });
            }
            counts[sym] += 1;
        }
        let n = R::from_usize(self.n).unwrap();
        Ok(counts
            .iter()
            .zip(&self.reference)
            .all(|(&c, &q)| (R::from_usize(c).unwrap() / n - q).abs() <= self.eps))
    }
}

const MIX_MULT_A: u64 = 0xbf58476d1ce4e5b9;
const MIX_MULT_B: u64 = 0x94d049bb133111eb;
const MIX_GOLDEN: u64 = 0x9e3779b97f4a7c15;
const COLOR_DOMAIN: u64 = 0x696473636f6c6f72;

/// 64-bit avalanche finalizer used by the coloring functions and the
/// per-trial seed split. The constants are fixed and platform-stable; they
/// are documented in the project README as a compatibility contract.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(MIX_MULT_A);
    z ^= z >> 27;
    z = z.wrapping_mul(MIX_MULT_B);
    z ^ (z >> 31)
}

fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ word.wrapping_mul(MIX_GOLDEN))
}

/// Keyed coloring function of one sender and identity: hashes the canonical
/// byte encoding of `y^n` (one symbol per byte, in order) into a color.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColoringFunction {
    /// Sender index.
    pub sender: usize,
    /// Identity selecting this function from the family.
    pub identity: u64,
    /// Number of colors `M_k`.
    pub colors: usize,
    /// Family seed shared by all senders and identities of one code.
    pub seed: u64,
}

impl ColoringFunction {
    /// Color of a feedback block, in `0..colors`.
    pub fn eval(&self, y: &[usize]) -> usize {
        let mut state = absorb(self.seed, COLOR_DOMAIN);
        state = absorb(state, self.sender as u64);
        state = absorb(state, self.identity);
        for &sym in y {
            state = absorb(state, sym as u64);
        }
        (state % self.colors as u64) as usize
    }
}

/// Free-function form of [`ColoringFunction::eval`].
pub fn coloring_eval(cf: &ColoringFunction, y: &[usize]) -> usize {
    cf.eval(y)
}

/// Product-structure transmission code carrying one color per sender over
/// `block_len` uses of the averaged channel, with exact maximum-likelihood
/// decoding regions.
#[derive(Clone, Debug)]
pub struct ColorTransmissionCode<R> {
    block_len: usize,
    color_counts: Vec<usize>,
    codebooks: Vec<Vec<Vec<usize>>>,
    codeword_errors: Vec<R>,
    codeword_distortions: Vec<Vec<R>>,
    decoder: Vec<Option<u32>>,
    output_alphabet: usize,
    max_error: R,
}

impl<R: Real> ColorTransmissionCode<R> {
    /// Code blocklength `ceil(sqrt(n))`.
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Colors per sender.
    pub fn color_counts(&self) -> &[usize] {
        &self.color_counts
    }

    /// Index space of joint color tuples.
    pub fn color_space(&self) -> TupleSpace {
        TupleSpace::new(&self.color_counts)
    }

    /// Target per-codeword error the greedy construction enforced.
    pub fn max_error(&self) -> R {
        self.max_error
    }

    /// Sender `k`'s codeword for one of its colors.
    pub fn codeword(&self, k: usize, color: usize) -> &[usize] {
        &self.codebooks[k][color]
    }

    /// Exact error probability of the joint codeword with flat color index
    /// `l_flat`: one minus the mass its own law puts on its decoding region.
    pub fn codeword_error(&self, l_flat: usize) -> R {
        self.codeword_errors[l_flat]
    }

    /// Largest exact per-codeword error in the code.
    pub fn worst_codeword_error(&self) -> R {
        self.codeword_errors
            .iter()
            .copied()
            .fold(R::zero(), |a, b| if b > a { b } else { a })
    }

    /// Average per-position distortion of a joint codeword for sender `k`.
    pub fn codeword_distortion(&self, l_flat: usize, k: usize) -> R {
        self.codeword_distortions[l_flat][k]
    }

    /// Worst per-codeword average distortion of sender `k`.
    pub fn worst_codeword_distortion(&self, k: usize) -> R {
        self.codeword_distortions
            .iter()
            .map(|row| row[k])
            .fold(R::zero(), |a, b| if b > a { b } else { a })
    }

    /// Maximum-likelihood decoding: the joint color tuple owning the
    /// received block, or `None` when the block has zero likelihood under
    /// every codeword and belongs to no decoding set.
    pub fn decode_colors(&self, tail: &[usize]) -> Result<Option<Vec<usize>>> {
        if tail.len() != self.block_len {
            return Err(Error::LengthMismatch {
                what: "color block".into(),
                expected: self.block_len,
                got: tail.len(),
            });
        }
        let mut seq = 0usize;
        for &sym in tail {
            if sym >= self.output_alphabet {
                return Err(Error::IndexOutOfAlphabet {
                    axis: "output".into(),
                    index: sym,
                    size: self.output_alphabet,
                });
            }
            seq = seq * self.output_alphabet + sym;
        }
        Ok(self.decoder[seq].map(|l| self.color_space().unflatten(l as usize)))
    }

    /// Decoding-set table as flat color indices over all output sequences
    /// (lexicographic), `None` where no codeword claims the sequence.
    pub fn decoder_table(&self) -> &[Option<u32>] {
        &self.decoder
    }
}

/// Packs color-index tuples into a single integer that compares in the same
/// order as lexicographic comparison of the tuples (16 bits per sender).
fn pack_colors(colors: &[usize]) -> u64 {
    let mut packed = 0u64;
    for &c in colors {
        packed = (packed << 16) | c as u64;
    }
    packed
}

fn unpack_colors(mut packed: u64, num_senders: usize) -> Vec<usize> {
    let mut out = vec![0usize; num_senders];
    for k in (0..num_senders).rev() {
        out[k] = (packed & 0xffff) as usize;
        packed >>= 16;
    }
    out
}

/// Exact likelihood of every output sequence under one joint codeword,
/// indexed with the first position most significant.
fn joint_likelihoods<R: Real>(avg: &AveragedChannel<R>, positions: &[usize]) -> Vec<R> {
    let y_size = avg.output_alphabet();
    let mut lik = vec![R::one()];
    for &xf in positions {
        let row = avg.row(xf);
        let mut next = vec![R::zero(); lik.len() * y_size];
        for (i, &l) in lik.iter().enumerate() {
            if l == R::zero() {
                continue;
            }
            let base = i * y_size;
            for (y, &p) in row.iter().enumerate() {
                if p > R::zero() {
                    next[base + y] = l * p;
                }
            }
        }
        lik = next;
    }
    lik
}

struct GreedyState<R> {
    owner: Vec<u64>,
    win_lik: Vec<R>,
    success: HashMap<u64, R>,
    seen: Vec<HashSet<Vec<usize>>>,
}

/// Greedily grows per-sender color codebooks into a joint transmission code.
///
/// Senders take turns; each turn scans candidate codewords over the
/// admissible symbols in lexicographic order and accepts the first one whose
/// joint codewords (paired with every existing combination of the other
/// senders' codewords) are per-position admissible, meet every sender's
/// per-codeword distortion cap, and keep all exact maximum-likelihood
/// errors at or below `max_error`. Likelihood ties go to the joint codeword
/// with the smaller color tuple. Construction fails with
/// `CodePackingFailure` when a full round adds nothing while some sender is
/// short of its color count.
pub fn greedy_transmission_code<R: Real>(
    avg: &AveragedChannel<R>,
    block_len: usize,
    color_counts: &[usize],
    admissible: &[usize],
    tuple_distortions: &[Vec<R>],
    budget: &[R],
    max_error: R,
    tol: R,
) -> Result<ColorTransmissionCode<R>> {
    let num_senders = avg.input_alphabets().len();
    if block_len == 0 {
        return Err(Error::InvalidParameter(
            "transmission code blocklength must be positive".into(),
        ));
    }
    if color_counts.len() != num_senders || budget.len() != num_senders {
        return Err(Error::DimensionMismatch {
            what: "color counts / budget".into(),
            expected: num_senders,
            got: color_counts.len().min(budget.len()),
        });
    }
    if num_senders > 4 {
        return Err(Error::InvalidParameter(
            "color codes support at most 4 senders".into(),
        ));
    }
    for (k, &m) in color_counts.iter().enumerate() {
        if m == 0 || m > 0xffff {
            return Err(Error::InvalidParameter(format!(
                "color count of sender {k} must be in 1..=65535, got {m}"
            )));
        }
    }
    if !(max_error >= R::zero() && max_error <= R::one()) {
        return Err(Error::InvalidParameter(format!(
            "max codeword error must lie in [0,1], got {max_error}"
        )));
    }
    if admissible.is_empty() {
        return Err(Error::InfeasibleDistortion {
            budget: budget
                .iter()
                .map(|&d| d.to_f64().unwrap_or(f64::NAN))
                .collect(),
        });
    }
    let y_size = avg.output_alphabet();
    let seq_count = (y_size as u128).pow(block_len as u32);
    if seq_count > MAX_EXACT_SEQUENCES {
        return Err(Error::TooLarge {
            what: "output sequence space".into(),
            size: seq_count,
            limit: MAX_EXACT_SEQUENCES,
        });
    }
    let seq_count = seq_count as usize;
    let joint_count: u128 = color_counts.iter().map(|&m| m as u128).product();
    if joint_count > MAX_EXACT_SEQUENCES {
        return Err(Error::TooLarge {
            what: "joint color space".into(),
            size: joint_count,
            limit: MAX_EXACT_SEQUENCES,
        });
    }
    let x_space = avg.input_space();
    let mut admissible_mask = vec![false; x_space.len()];
    for &xf in admissible {
        admissible_mask[xf] = true;
    }
    // Candidate symbols per sender: those occurring in an admissible tuple.
    let usable: Vec<Vec<usize>> = (0..num_senders)
        .map(|k| {
            let mut syms: Vec<usize> = admissible
                .iter()
                .map(|&xf| x_space.unflatten(xf)[k])
                .collect();
            syms.sort_unstable();
            syms.dedup();
            syms
        })
        .collect();
    for (k, syms) in usable.iter().enumerate() {
        let count = (syms.len() as u128).pow(block_len as u32);
        if count > MAX_EXACT_SEQUENCES {
            return Err(Error::TooLarge {
                what: format!("candidate codewords of sender {k}"),
                size: count,
                limit: MAX_EXACT_SEQUENCES,
            });
        }
    }

    let mut codebooks: Vec<Vec<Vec<usize>>> = vec![Vec::new(); num_senders];
    let mut state = GreedyState {
        owner: vec![u64::MAX; seq_count],
        win_lik: vec![R::zero(); seq_count],
        success: HashMap::new(),
        seen: vec![HashSet::new(); num_senders],
    };

    // One attempt: scan sender k's candidates and commit the first
    // acceptable codeword. Returns whether something was added.
    let try_add = |codebooks: &mut Vec<Vec<Vec<usize>>>, state: &mut GreedyState<R>, k: usize| -> bool {
        let n_others: usize = (0..num_senders)
            .filter(|&j| j != k)
            .map(|j| codebooks[j].len())
            .product();
        let others_present = (0..num_senders).filter(|&j| j != k).all(|j| !codebooks[j].is_empty());
        let new_color = codebooks[k].len();
        let mut cand = vec![0usize; block_len];
        let syms = &usable[k];
        let total = syms.len().pow(block_len as u32);
        'candidates: for rank in 0..total {
            // Candidate symbols in lexicographic order over usable symbols.
            let mut r = rank;
            for t in (0..block_len).rev() {
                cand[t] = syms[r % syms.len()];
                r /= syms.len();
            }
            if state.seen[k].contains(&cand) {
                continue;
            }
            // Joint feasibility of every new codeword tuple: per-position
            // admissibility and per-sender distortion caps.
            let mut new_tuples: Vec<(u64, Vec<usize>)> = Vec::new();
            if others_present && num_senders > 1 {
                let other_space: Vec<usize> = (0..num_senders)
                    .map(|j| if j == k { 1 } else { codebooks[j].len() })
                    .collect();
                let others = TupleSpace::new(&other_space);
                for mut colors in others.iter() {
                    colors[k] = new_color;
                    let mut positions = Vec::with_capacity(block_len);
                    let mut dist_sum = vec![R::zero(); num_senders];
                    for t in 0..block_len {
                        let x: Vec<usize> = (0..num_senders)
                            .map(|j| {
                                if j == k {
                                    cand[t]
                                } else {
                                    codebooks[j][colors[j]][t]
                                }
                            })
                            .collect();
                        let xf = x_space.flatten(&x);
                        if !admissible_mask[xf] {
                            continue 'candidates;
                        }
                        for j in 0..num_senders {
                            dist_sum[j] += tuple_distortions[xf][j];
                        }
                        positions.push(xf);
                    }
                    let scale = R::from_usize(block_len).unwrap();
                    for j in 0..num_senders {
                        if dist_sum[j] / scale > budget[j] + tol {
                            continue 'candidates;
                        }
                    }
                    new_tuples.push((pack_colors(&colors), positions));
                }
            } else if num_senders == 1 {
                let mut positions = Vec::with_capacity(block_len);
                let mut dist_sum = R::zero();
                let mut feasible = true;
                for t in 0..block_len {
                    let xf = x_space.flatten(&cand[t..t + 1]);
                    if !admissible_mask[xf] {
                        feasible = false;
                        break;
                    }
                    dist_sum += tuple_distortions[xf][0];
                    positions.push(xf);
                }
                if !feasible
                    || dist_sum / R::from_usize(block_len).unwrap() > budget[0] + tol
                {
                    continue 'candidates;
                }
                new_tuples.push((pack_colors(&[new_color]), positions));
            } else {
                // Other senders have no codewords yet: no joint codeword
                // exists, so only per-position symbol admissibility can be
                // checked against some admissible completion.
                let ok = cand.iter().all(|&sym| {
                    admissible.iter().any(|&xf| x_space.unflatten(xf)[k] == sym)
                });
                if !ok {
                    continue 'candidates;
                }
            }
            debug_assert_eq!(new_tuples.len(), if others_present && num_senders > 1 { n_others } else if num_senders == 1 { 1 } else { 0 });

            if new_tuples.is_empty() {
                state.seen[k].insert(cand.clone());
                codebooks[k].push(cand.clone());
                return true;
            }

            // Exact maximum-likelihood evaluation of the enlarged code.
            // best_new holds, per output sequence, the strongest new tuple
            // (ties to the smaller packed color tuple by scan order).
            let mut best_new_lik = vec![R::zero(); seq_count];
            let mut best_new_packed = vec![u64::MAX; seq_count];
            let mut new_mass: HashMap<u64, R> = HashMap::new();
            for (packed, positions) in &new_tuples {
                let lik = joint_likelihoods(avg, positions);
                for (seq, &l) in lik.iter().enumerate() {
                    if l > best_new_lik[seq] {
                        best_new_lik[seq] = l;
                        best_new_packed[seq] = *packed;
                    }
                }
                new_mass.insert(*packed, R::zero());
            }
            let mut stolen: HashMap<u64, R> = HashMap::new();
            let mut claims: Vec<(usize, R, u64)> = Vec::new();
            for seq in 0..seq_count {
                let l = best_new_lik[seq];
                if l == R::zero() {
                    continue;
                }
                let current = state.win_lik[seq];
                let wins = l > current
                    || (l == current && best_new_packed[seq] < state.owner[seq]);
                if !wins {
                    continue;
                }
                if state.owner[seq] != u64::MAX {
                    let owner_lik = owner_likelihood(
                        avg,
                        codebooks,
                        state.owner[seq],
                        num_senders,
                        block_len,
                        y_size,
                        seq,
                    );
                    *stolen.entry(state.owner[seq]).or_insert(R::zero()) += owner_lik;
                }
                *new_mass.get_mut(&best_new_packed[seq]).unwrap() += l;
                claims.push((seq, l, best_new_packed[seq]));
            }
            for &mass in new_mass.values() {
                if R::one() - mass > max_error {
                    continue 'candidates;
                }
            }
            for (&owner, &loss) in stolen.iter() {
                let left = state.success[&owner] - loss;
                if R::one() - left > max_error {
                    continue 'candidates;
                }
            }
            // Commit.
            for (seq, l, packed) in claims {
                state.win_lik[seq] = l;
                state.owner[seq] = packed;
            }
            for (owner, loss) in stolen {
                *state.success.get_mut(&owner).unwrap() -= loss;
            }
            for (packed, mass) in new_mass {
                state.success.insert(packed, mass);
            }
            state.seen[k].insert(cand.clone());
            codebooks[k].push(cand.clone());
            return true;
        }
        false
    };

    // Initial pass in sender order, then round-robin growth.
    for k in 0..num_senders {
        try_add(&mut codebooks, &mut state, k);
    }
    loop {
        let full = (0..num_senders).all(|k| codebooks[k].len() >= color_counts[k]);
        if full {
            break;
        }
        let mut progress = false;
        for k in 0..num_senders {
            if codebooks[k].len() < color_counts[k] {
                progress |= try_add(&mut codebooks, &mut state, k);
            }
        }
        if !progress {
            let packed: usize = if codebooks.iter().any(|c| c.is_empty()) {
                0
            } else {
                codebooks.iter().map(|c| c.len()).product()
            };
            return Err(Error::CodePackingFailure {
                packed,
                requested: color_counts.iter().product(),
                block_len,
                max_error: max_error.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    // Assemble flat tables over the final color space.
    let color_space = TupleSpace::new(color_counts);
    let mut codeword_errors = Vec::with_capacity(color_space.len());
    let mut codeword_distortions = Vec::with_capacity(color_space.len());
    for colors in color_space.iter() {
        let packed = pack_colors(&colors);
        let success = state.success[&packed];
        codeword_errors.push(R::one() - success);
        let mut dist = vec![R::zero(); num_senders];
        for t in 0..block_len {
            let x: Vec<usize> = (0..num_senders)
                .map(|j| codebooks[j][colors[j]][t])
                .collect();
            let xf = x_space.flatten(&x);
            for j in 0..num_senders {
                dist[j] += tuple_distortions[xf][j];
            }
        }
        let scale = R::from_usize(block_len).unwrap();
        codeword_distortions.push(dist.into_iter().map(|d| d / scale).collect());
    }
    let decoder: Vec<Option<u32>> = state
        .owner
        .iter()
        .map(|&packed| {
            if packed == u64::MAX {
                None
            } else {
                let colors = unpack_colors(packed, num_senders);
                Some(color_space.flatten(&colors) as u32)
            }
        })
        .collect();
    Ok(ColorTransmissionCode {
        block_len,
        color_counts: color_counts.to_vec(),
        codebooks,
        codeword_errors,
        codeword_distortions,
        decoder,
        output_alphabet: y_size,
        max_error,
    })
}

/// Likelihood of one output sequence under the joint codeword with the given
/// packed color tuple.
fn owner_likelihood<R: Real>(
    avg: &AveragedChannel<R>,
    codebooks: &[Vec<Vec<usize>>],
    packed: u64,
    num_senders: usize,
    block_len: usize,
    y_size: usize,
    seq: usize,
) -> R {
    let colors = unpack_colors(packed, num_senders);
    let x_space = avg.input_space();
    let mut symbols = vec![0usize; block_len];
    let mut s = seq;
    for t in (0..block_len).rev() {
        symbols[t] = s % y_size;
        s /= y_size;
    }
    let mut lik = R::one();
    for t in 0..block_len {
        let x: Vec<usize> = (0..num_senders)
            .map(|j| codebooks[j][colors[j]][t])
            .collect();
        lik = lik * avg.prob(x_space.flatten(&x), symbols[t]);
        if lik == R::zero() {
            break;
        }
    }
    lik
}

/// Phase mode of the common-randomness block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeMode {
    /// Fixed sensing-optimal symbol tuple.
    Deterministic,
    /// I.i.d. samples from the sensing-optimal product distribution.
    Randomized,
}

impl CodeMode {
    /// Token used in descriptors and CLI flags.
    pub fn as_str(self) -> &'static str {
        match self {
            CodeMode::Deterministic => "det",
            CodeMode::Randomized => "rand",
        }
    }
}

/// Input transmitted in the common-randomness phase.
#[derive(Clone, Debug, PartialEq)]
pub enum CrInput<R> {
    /// Deterministic mode: one symbol per sender.
    Symbols(Vec<usize>),
    /// Randomized mode: one distribution per sender.
    Product(Vec<Vec<R>>),
}

/// Selects the common-randomness input for a budget: the admissible symbol
/// tuple (deterministic) or product distribution (randomized) maximizing
/// output entropy. Returns the input and its output distribution, which
/// serves as the typicality reference.
pub fn select_cr_input<R: Real>(
    spec: &SdMacSpec<R>,
    budget: &[R],
    mode: CodeMode,
    cfg: &OptConfig<R>,
) -> Result<(CrInput<R>, Vec<R>)> {
    let avg = spec.average_channel();
    match mode {
        CodeMode::Deterministic => {
            let point = deterministic_bound(spec, budget)?;
            let x = match point.achiever {
                Some(Achiever::Symbols(x)) => x,
                _ => unreachable!("deterministic bound returns a symbol achiever"),
            };
            let q = avg.row(spec.input_space().flatten(&x)).to_vec();
            Ok((CrInput::Symbols(x), q))
        }
        CodeMode::Randomized => {
            let point = randomized_bound(spec, budget, cfg)?;
            let dists = match point.achiever {
                Some(Achiever::Product(d)) => d,
                _ => unreachable!("randomized bound returns a product achiever"),
            };
            let q = product_output(&avg, &dists);
            Ok((CrInput::Product(dists), q))
        }
    }
}

/// Build-time parameters of an identification code.
#[derive(Clone, Debug)]
pub struct BuildParams<R> {
    /// Common-randomness blocklength `n`.
    pub n: usize,
    /// Typicality tolerance.
    pub eps: R,
    /// Colors per sender `M_k`.
    pub colors: Vec<usize>,
    /// Identities per sender `N_k`.
    pub identities: Vec<u64>,
    /// Seed keying the coloring-function family.
    pub seed: u64,
    /// Common-randomness phase mode.
    pub mode: CodeMode,
    /// Per-codeword error target of the color transmission code.
    pub max_codeword_error: R,
    /// Optimizer configuration for the randomized CR input.
    pub opt: OptConfig<R>,
}

impl<R: Real> BuildParams<R> {
    /// Parameters with the default error target (0.1) and optimizer.
    pub fn new(
        n: usize,
        eps: R,
        colors: Vec<usize>,
        identities: Vec<u64>,
        seed: u64,
        mode: CodeMode,
    ) -> Self {
        BuildParams {
            n,
            eps,
            colors,
            identities,
            seed,
            mode,
            max_codeword_error: R::from_f64_lossy(0.1),
            opt: OptConfig::default(),
        }
    }
}

/// A fully assembled identification code for one channel and budget.
#[derive(Clone, Debug)]
pub struct IdfCode<R> {
    mode: CodeMode,
    n: usize,
    block_len: usize,
    colors: Vec<usize>,
    identities: Vec<u64>,
    seed: u64,
    budget: Vec<R>,
    cr_input: CrInput<R>,
    cr_distortions: Vec<R>,
    typicality: TypicalityTest<R>,
    fallback: Vec<usize>,
    code: ColorTransmissionCode<R>,
    warnings: Vec<String>,
}

impl<R: Real> IdfCode<R> {
    /// Common-randomness phase mode.
    pub fn mode(&self) -> CodeMode {
        self.mode
    }

    /// Common-randomness blocklength `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Color-phase blocklength `ceil(sqrt(n))`.
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Total blocklength `m = n + ceil(sqrt(n))`.
    pub fn m(&self) -> usize {
        self.n + self.block_len
    }

    /// Colors per sender.
    pub fn colors(&self) -> &[usize] {
        &self.colors
    }

    /// Identities per sender.
    pub fn identities(&self) -> &[u64] {
        &self.identities
    }

    /// Coloring-family seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Distortion budget the code was built for.
    pub fn budget(&self) -> &[R] {
        &self.budget
    }

    /// Common-randomness input.
    pub fn cr_input(&self) -> &CrInput<R> {
        &self.cr_input
    }

    /// Per-sender minimal distortion of the common-randomness input.
    pub fn cr_distortions(&self) -> &[R] {
        &self.cr_distortions
    }

    /// Typicality test applied to the fed-back block.
    pub fn typicality(&self) -> &TypicalityTest<R> {
        &self.typicality
    }

    /// Symbol tuple transmitted after a failed typicality check: the
    /// admissible tuple with the smallest total distortion.
    pub fn fallback(&self) -> &[usize] {
        &self.fallback
    }

    /// Color transmission code.
    pub fn color_code(&self) -> &ColorTransmissionCode<R> {
        &self.code
    }

    /// Build warnings (non-fatal).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Coloring function of one sender and identity.
    pub fn coloring(&self, k: usize, identity: u64) -> ColoringFunction {
        ColoringFunction {
            sender: k,
            identity,
            colors: self.colors[k],
            seed: self.seed,
        }
    }

    /// Number of senders.
    pub fn num_senders(&self) -> usize {
        self.colors.len()
    }

    /// JSON descriptor with the complete code: parameters, CR input,
    /// codeword tables and the decoding-set table. Byte-deterministic.
    pub fn descriptor_json(&self) -> String {
        let mut obj = Map::new();
        obj.insert("mode".into(), Value::from(self.mode.as_str()));
        obj.insert("n".into(), Value::from(self.n));
        obj.insert("block_len".into(), Value::from(self.block_len));
        obj.insert("m".into(), Value::from(self.m()));
        obj.insert(
            "eps".into(),
            json_f64(self.typicality.eps().to_f64().unwrap_or(f64::NAN)),
        );
        obj.insert("colors".into(), Value::from(self.colors.clone()));
        obj.insert("identities".into(), Value::from(self.identities.clone()));
        obj.insert("seed".into(), Value::from(self.seed));
        obj.insert("budget".into(), json_f64_vec(&self.budget));
        let cr = match &self.cr_input {
            CrInput::Symbols(x) => {
                let mut m = Map::new();
                m.insert("type".into(), Value::from("symbols"));
                m.insert("x".into(), Value::from(x.clone()));
                Value::Object(m)
            }
            CrInput::Product(dists) => {
                let mut m = Map::new();
                m.insert("type".into(), Value::from("product"));
                m.insert(
                    "P".into(),
                    Value::Array(dists.iter().map(|p| json_f64_vec(p)).collect()),
                );
                Value::Object(m)
            }
        };
        obj.insert("cr_input".into(), cr);
        obj.insert(
            "typicality_reference".into(),
            json_f64_vec(self.typicality.reference()),
        );
        obj.insert("cr_distortions".into(), json_f64_vec(&self.cr_distortions));
        obj.insert(
            "fallback".into(),
            Value::from(self.fallback.clone()),
        );
        obj.insert(
            "max_codeword_error".into(),
            json_f64(self.code.max_error().to_f64().unwrap_or(f64::NAN)),
        );
        obj.insert(
            "codebooks".into(),
            Value::Array(
                self.code
                    .codebooks
                    .iter()
                    .map(|book| {
                        Value::Array(
                            book.iter()
                                .map(|cw| Value::from(cw.clone()))
                                .collect(),
                        )
                    })
                    .collect(),
            ),
        );
        obj.insert(
            "codeword_errors".into(),
            json_f64_vec(&self.code.codeword_errors),
        );
        obj.insert(
            "decoder".into(),
            Value::Array(
                self.code
                    .decoder
                    .iter()
                    .map(|e| match e {
                        None => Value::Null,
                        Some(l) => Value::from(*l),
                    })
                    .collect(),
            ),
        );
        obj.insert(
            "warnings".into(),
            Value::Array(self.warnings.iter().map(|w| Value::from(w.as_str())).collect()),
        );
        serde_json::to_string_pretty(&Value::Object(obj)).expect("serialization cannot fail")
    }
}

fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn json_f64_vec<R: Real>(vs: &[R]) -> Value {
    Value::Array(
        vs.iter()
            .map(|&v| json_f64(v.to_f64().unwrap_or(f64::NAN)))
            .collect(),
    )
}

/// Builds the full identification code: CR input selection, typicality
/// test, fallback tuple and greedy color transmission code.
pub fn build_idf_code<R: Real>(
    spec: &SdMacSpec<R>,
    budget: &[R],
    params: &BuildParams<R>,
) -> Result<IdfCode<R>> {
    spec.validate()?;
    if params.n < 4 {
        return Err(Error::InvalidParameter(format!(
            "common-randomness blocklength must be at least 4, got {}",
            params.n
        )));
    }
    let num_senders = spec.num_senders();
    if params.colors.len() != num_senders {
        return Err(Error::DimensionMismatch {
            what: "colors".into(),
            expected: num_senders,
            got: params.colors.len(),
        });
    }
    if params.identities.len() != num_senders {
        return Err(Error::DimensionMismatch {
            what: "identities".into(),
            expected: num_senders,
            got: params.identities.len(),
        });
    }
    for (k, &n_k) in params.identities.iter().enumerate() {
        if n_k == 0 {
            return Err(Error::InvalidParameter(format!(
                "identity count of sender {k} must be positive"
            )));
        }
    }
    if spec.output_alphabet() > 256 {
        return Err(Error::InvalidParameter(
            "output alphabets beyond 256 symbols break the one-byte canonical encoding".into(),
        ));
    }
    let block_len = ceil_sqrt(params.n);
    let (cr_input, q) = select_cr_input(spec, budget, params.mode, &params.opt)?;
    let mut warnings = Vec::new();
    if params.eps == R::zero() {
        warnings.push(
            "eps = 0 accepts only blocks whose empirical type matches the reference exactly; \
             the typical set may be empty"
                .to_string(),
        );
    }
    let typicality = TypicalityTest::new(params.n, params.eps, q)?;
    let cr_distortions: Vec<R> = match &cr_input {
        CrInput::Symbols(x) => {
            let model = InputModel::from_symbols(x);
            (0..num_senders)
                .map(|k| symbol_distortion(spec, &model, k, x[k]))
                .collect::<Result<_>>()?
        }
        CrInput::Product(dists) => {
            let model = InputModel::from_distributions(dists.clone());
            (0..num_senders)
                .map(|k| distribution_distortion(spec, &model, k, &dists[k]))
                .collect::<Result<_>>()?
        }
    };
    let admissible = admissible_tuples(spec, budget, params.opt.tol)?;
    let tuple_d = symbol_tuple_distortions(spec)?;
    let x_space = spec.input_space();
    let fallback = admissible
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let ta: R = tuple_d[a].iter().copied().sum();
            let tb: R = tuple_d[b].iter().copied().sum();
            ta.partial_cmp(&tb).unwrap()
        })
        .map(|xf| x_space.unflatten(xf))
        .ok_or_else(|| Error::InfeasibleDistortion {
            budget: budget
                .iter()
                .map(|&d| d.to_f64().unwrap_or(f64::NAN))
                .collect(),
        })?;
    let avg = spec.average_channel();
    let code = greedy_transmission_code(
        &avg,
        block_len,
        &params.colors,
        &admissible,
        &tuple_d,
        budget,
        params.max_codeword_error,
        params.opt.tol,
    )?;
    Ok(IdfCode {
        mode: params.mode,
        n: params.n,
        block_len,
        colors: params.colors.clone(),
        identities: params.identities.clone(),
        seed: params.seed,
        budget: budget.to_vec(),
        cr_input,
        cr_distortions,
        typicality,
        fallback,
        code,
        warnings,
    })
}

/// One encoder output symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodeStep {
    /// Symbol sender `k` transmits at this step.
    pub symbol: usize,
    /// Set when the feedback block failed the typicality test and the
    /// sender fell back to the distortion-minimizing admissible symbol.
    pub cr_failure: bool,
}

/// Computes sender `k`'s transmitted symbol at step `t` (1-based) given the
/// feedback prefix `y^{t-1}`.
///
/// During the common-randomness phase the symbol is the fixed CR input
/// (deterministic mode) or a fresh sample from it (randomized mode; one
/// uniform draw from `rng`). Afterwards the sender transmits its codeword
/// for the color of `y^n`, or its component of the fallback tuple when
/// `y^n` is atypical.
pub fn encode_step<R: Real, G: Rng + ?Sized>(
    code: &IdfCode<R>,
    k: usize,
    identity: u64,
    t: usize,
    feedback: &[usize],
    rng: &mut G,
) -> Result<EncodeStep> {
    if k >= code.num_senders() {
        return Err(Error::IndexOutOfAlphabet {
            axis: "sender".into(),
            index: k,
            size: code.num_senders(),
        });
    }
    if identity >= code.identities[k] {
        return Err(Error::IndexOutOfAlphabet {
            axis: format!("identity[{k}]"),
            index: identity as usize,
            size: code.identities[k] as usize,
        });
    }
    if t == 0 || t > code.m() {
        return Err(Error::InvalidParameter(format!(
            "step index must lie in 1..={}, got {t}",
            code.m()
        )));
    }
    if feedback.len() != t - 1 {
        return Err(Error::LengthMismatch {
            what: "feedback prefix".into(),
            expected: t - 1,
            got: feedback.len(),
        });
    }
    if t <= code.n {
        let symbol = match &code.cr_input {
            CrInput::Symbols(x) => x[k],
            CrInput::Product(dists) => sample_categorical(&dists[k], rng),
        };
        return Ok(EncodeStep {
            symbol,
            cr_failure: false,
        });
    }
    let y_n = &feedback[..code.n];
    if code.typicality.is_typical(y_n)? {
        let color = code.coloring(k, identity).eval(y_n);
        Ok(EncodeStep {
            symbol: code.code.codeword(k, color)[t - code.n - 1],
            cr_failure: false,
        })
    } else {
        Ok(EncodeStep {
            symbol: code.fallback[k],
            cr_failure: true,
        })
    }
}

/// Why a decode rejected (or did not).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeDiagnostic {
    /// Colors decoded; verdicts are meaningful per sender.
    Ok,
    /// The feedback block was atypical; all senders rejected.
    CrFailure,
    /// The color block lay in no decoding set; all senders rejected.
    ColorDecodeFailure,
}

/// Receiver output for one claimed identity tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutcome {
    /// Per-sender accept verdicts for the claimed identities.
    pub verdicts: Vec<bool>,
    /// Failure-path diagnostic.
    pub diagnostic: DecodeDiagnostic,
    /// Decoded color tuple, when the color stage succeeded.
    pub colors: Option<Vec<usize>>,
}

/// Tests a claimed identity tuple against a received block `y^m`.
pub fn decode<R: Real>(
    code: &IdfCode<R>,
    received: &[usize],
    claimed: &[u64],
) -> Result<DecodeOutcome> {
    if received.len() != code.m() {
        return Err(Error::LengthMismatch {
            what: "received block".into(),
            expected: code.m(),
            got: received.len(),
        });
    }
    if claimed.len() != code.num_senders() {
        return Err(Error::DimensionMismatch {
            what: "claimed identities".into(),
            expected: code.num_senders(),
            got: claimed.len(),
        });
    }
    for (k, &id) in claimed.iter().enumerate() {
        if id >= code.identities[k] {
            return Err(Error::IndexOutOfAlphabet {
                axis: format!("identity[{k}]"),
                index: id as usize,
                size: code.identities[k] as usize,
            });
        }
    }
    let y_n = &received[..code.n];
    if !code.typicality.is_typical(y_n)? {
        return Ok(DecodeOutcome {
            verdicts: vec![false; code.num_senders()],
            diagnostic: DecodeDiagnostic::CrFailure,
            colors: None,
        });
    }
    match code.code.decode_colors(&received[code.n..])? {
        None => Ok(DecodeOutcome {
            verdicts: vec![false; code.num_senders()],
            diagnostic: DecodeDiagnostic::ColorDecodeFailure,
            colors: None,
        }),
        Some(colors) => {
            let verdicts = (0..code.num_senders())
                .map(|k| code.coloring(k, claimed[k]).eval(y_n) == colors[k])
                .collect();
            Ok(DecodeOutcome {
                verdicts,
                diagnostic: DecodeDiagnostic::Ok,
                colors: Some(colors),
            })
        }
    }
}
