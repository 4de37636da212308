//! State-dependent multiple access channel descriptions.
//!
//! A channel with `K` senders is given by a transition kernel
//! `W(y | x_1..x_K, s_1..s_K)`, a joint distribution over the per-sender
//! state tuple, and one square distortion table per sender. States are drawn
//! independently across channel uses; every sender sees the output causally
//! through noiseless feedback.
//!
//! Symbol and state tuples are indexed through [`TupleSpace`], a mixed-radix
//! code with the first coordinate most significant, so flat order equals
//! lexicographic order on tuples.

use rand::Rng;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mixed-radix index space over symbol or state tuples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleSpace {
    sizes: Vec<usize>,
}

impl TupleSpace {
    /// Builds the space of tuples `(t_1, .., t_n)` with `t_i < sizes[i]`.
    pub fn new(sizes: &[usize]) -> Self {
        TupleSpace {
            sizes: sizes.to_vec(),
        }
    }

    /// Number of coordinates.
    pub fn arity(&self) -> usize {
        self.sizes.len()
    }

    /// Per-coordinate alphabet sizes.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total number of tuples.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    /// True when some coordinate has an empty alphabet.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rank of a tuple in lexicographic order.
    pub fn flatten(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.sizes.len());
        let mut index = 0;
        for (&t, &size) in tuple.iter().zip(&self.sizes) {
            debug_assert!(t < size);
            index = index * size + t;
        }
        index
    }

    /// Tuple with the given lexicographic rank.
    pub fn unflatten(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        self.unflatten_into(index, &mut out);
        out
    }

    /// In-place variant of [`TupleSpace::unflatten`] for hot loops.
    pub fn unflatten_into(&self, mut index: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.sizes.len());
        for i in (0..self.sizes.len()).rev() {
            out[i] = index % self.sizes[i];
            index /= self.sizes[i];
        }
        debug_assert_eq!(index, 0);
    }

    /// Iterates all tuples in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len()).map(move |i| self.unflatten(i))
    }
}

/// Full description of a state-dependent multiple access channel.
///
/// The kernel is stored flat as `[x_flat][s_flat][y]`, the state distribution
/// as `[s_flat]`, and sender `k`'s distortion table as `[s][s_hat]` over its
/// own state alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct SdMacSpec<R> {
    num_senders: usize,
    input_alphabets: Vec<usize>,
    state_alphabets: Vec<usize>,
    output_alphabet: usize,
    kernel: Vec<R>,
    state_dist: Vec<R>,
    distortion: Vec<Vec<R>>,
}

impl<R: Real> SdMacSpec<R> {
    /// Assembles a channel from flat tables, checking shapes only.
    ///
    /// Probabilistic invariants (nonnegativity, row sums) are checked by
    /// [`SdMacSpec::validate`].
    pub fn new(
        input_alphabets: Vec<usize>,
        state_alphabets: Vec<usize>,
        output_alphabet: usize,
        kernel: Vec<R>,
        state_dist: Vec<R>,
        distortion: Vec<Vec<R>>,
    ) -> Result<Self> {
        let num_senders = input_alphabets.len();
        if num_senders == 0 {
            return Err(Error::InvalidParameter(
                "at least one sender is required".into(),
            ));
        }
        if state_alphabets.len() != num_senders {
            return Err(Error::DimensionMismatch {
                what: "state_alphabets".into(),
                expected: num_senders,
                got: state_alphabets.len(),
            });
        }
        for (k, &size) in input_alphabets.iter().enumerate() {
            if size == 0 {
                return Err(Error::InvalidParameter(format!(
                    "input alphabet of sender {k} is empty"
                )));
            }
        }
        for (k, &size) in state_alphabets.iter().enumerate() {
            if size == 0 {
                return Err(Error::InvalidParameter(format!(
                    "state alphabet of sender {k} is empty"
                )));
            }
        }
        if output_alphabet == 0 {
            return Err(Error::InvalidParameter("output alphabet is empty".into()));
        }
        let x_total: usize = input_alphabets.iter().product();
        let s_total: usize = state_alphabets.iter().product();
        if kernel.len() != x_total * s_total * output_alphabet {
            return Err(Error::DimensionMismatch {
                what: "kernel".into(),
                expected: x_total * s_total * output_alphabet,
                got: kernel.len(),
            });
        }
        if state_dist.len() != s_total {
            return Err(Error::DimensionMismatch {
                what: "state_dist".into(),
                expected: s_total,
                got: state_dist.len(),
            });
        }
        if distortion.len() != num_senders {
            return Err(Error::DimensionMismatch {
                what: "distortion".into(),
                expected: num_senders,
                got: distortion.len(),
            });
        }
        for (k, table) in distortion.iter().enumerate() {
            let side = state_alphabets[k];
            if table.len() != side * side {
                return Err(Error::DimensionMismatch {
                    what: format!("distortion[{k}]"),
                    expected: side * side,
                    got: table.len(),
                });
            }
        }
        Ok(SdMacSpec {
            num_senders,
            input_alphabets,
            state_alphabets,
            output_alphabet,
            kernel,
            state_dist,
            distortion,
        })
    }

    /// Number of senders `K`.
    pub fn num_senders(&self) -> usize {
        self.num_senders
    }

    /// Per-sender input alphabet sizes.
    pub fn input_alphabets(&self) -> &[usize] {
        &self.input_alphabets
    }

    /// Per-sender state alphabet sizes.
    pub fn state_alphabets(&self) -> &[usize] {
        &self.state_alphabets
    }

    /// Output alphabet size.
    pub fn output_alphabet(&self) -> usize {
        self.output_alphabet
    }

    /// Index space of input tuples.
    pub fn input_space(&self) -> TupleSpace {
        TupleSpace::new(&self.input_alphabets)
    }

    /// Index space of state tuples.
    pub fn state_space(&self) -> TupleSpace {
        TupleSpace::new(&self.state_alphabets)
    }

    /// Kernel probability `W(y | x, s)` with flat tuple indices.
    pub fn kernel_prob(&self, x_flat: usize, s_flat: usize, y: usize) -> R {
        let s_total: usize = self.state_alphabets.iter().product();
        self.kernel[(x_flat * s_total + s_flat) * self.output_alphabet + y]
    }

    /// Kernel probability with explicit tuples.
    pub fn kernel_prob_at(&self, x: &[usize], s: &[usize], y: usize) -> R {
        self.kernel_prob(self.input_space().flatten(x), self.state_space().flatten(s), y)
    }

    /// Probability of the state tuple with flat index `s_flat`.
    pub fn state_prob(&self, s_flat: usize) -> R {
        self.state_dist[s_flat]
    }

    /// Distortion `d_k(s, s_hat)` for sender `k`.
    pub fn distortion_entry(&self, k: usize, s: usize, s_hat: usize) -> R {
        self.distortion[k][s * self.state_alphabets[k] + s_hat]
    }

    /// Sender `k`'s full distortion table, row-major over `(s, s_hat)`.
    pub fn distortion_matrix(&self, k: usize) -> &[R] {
        &self.distortion[k]
    }

    /// Largest entry of sender `k`'s distortion table.
    pub fn max_distortion(&self, k: usize) -> R {
        self.distortion[k]
            .iter()
            .copied()
            .fold(R::zero(), |a, b| if b > a { b } else { a })
    }

    /// Checks probabilistic invariants and reports the first violation.
    ///
    /// Check order: kernel rows (entries nonnegative, then the row sum),
    /// state distribution, distortion tables. Row sums must be within
    /// [`Real::prob_tol`] of one.
    pub fn validate(&self) -> Result<()> {
        let x_space = self.input_space();
        let s_space = self.state_space();
        let tol = R::prob_tol();
        for x_flat in 0..x_space.len() {
            for s_flat in 0..s_space.len() {
                let mut sum = R::zero();
                for y in 0..self.output_alphabet {
                    let p = self.kernel_prob(x_flat, s_flat, y);
                    if p < R::zero() {
                        let mut index = x_space.unflatten(x_flat);
                        index.extend(s_space.unflatten(s_flat));
                        index.push(y);
                        return Err(Error::NegativeEntry {
                            table: "kernel",
                            index,
                            value: p.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                    sum += p;
                }
                if (sum - R::one()).abs() > tol {
                    return Err(Error::NonStochasticRow {
                        x: x_space.unflatten(x_flat),
                        s: s_space.unflatten(s_flat),
                        sum: sum.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        let mut sum = R::zero();
        for s_flat in 0..s_space.len() {
            let p = self.state_dist[s_flat];
            if p < R::zero() {
                return Err(Error::NegativeEntry {
                    table: "state_dist",
                    index: s_space.unflatten(s_flat),
                    value: p.to_f64().unwrap_or(f64::NAN),
                });
            }
            sum += p;
        }
        if (sum - R::one()).abs() > tol {
            return Err(Error::NonStochasticRow {
                x: Vec::new(),
                s: Vec::new(),
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }
        for (k, table) in self.distortion.iter().enumerate() {
            let side = self.state_alphabets[k];
            for (i, &v) in table.iter().enumerate() {
                if v < R::zero() {
                    return Err(Error::NegativeEntry {
                        table: "distortion",
                        index: vec![k, i / side, i % side],
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Ok(())
    }

    /// Channel seen by a sender that knows nothing about the state: the
    /// kernel averaged over the state distribution.
    pub fn average_channel(&self) -> AveragedChannel<R> {
        let x_total = self.input_space().len();
        let s_total = self.state_space().len();
        let mut rows = vec![R::zero(); x_total * self.output_alphabet];
        for x_flat in 0..x_total {
            for s_flat in 0..s_total {
                let ps = self.state_dist[s_flat];
                if ps == R::zero() {
                    continue;
                }
                for y in 0..self.output_alphabet {
                    rows[x_flat * self.output_alphabet + y] +=
                        ps * self.kernel_prob(x_flat, s_flat, y);
                }
            }
        }
        AveragedChannel {
            input_alphabets: self.input_alphabets.clone(),
            output_alphabet: self.output_alphabet,
            rows,
        }
    }

    /// Draws one channel use: samples a state tuple from the state
    /// distribution, then an output from the kernel row at `(x, s)`.
    ///
    /// Consumes exactly two uniform draws from `rng` in that order.
    pub fn sample_use<G: Rng + ?Sized>(
        &self,
        x: &[usize],
        rng: &mut G,
    ) -> Result<(Vec<usize>, usize)> {
        if x.len() != self.num_senders {
            return Err(Error::LengthMismatch {
                what: "input tuple".into(),
                expected: self.num_senders,
                got: x.len(),
            });
        }
        for (k, &sym) in x.iter().enumerate() {
            if sym >= self.input_alphabets[k] {
                return Err(Error::IndexOutOfAlphabet {
                    axis: format!("input[{k}]"),
                    index: sym,
                    size: self.input_alphabets[k],
                });
            }
        }
        let s_space = self.state_space();
        let s_flat = sample_categorical(&self.state_dist, rng);
        let x_flat = self.input_space().flatten(x);
        let s_total = s_space.len();
        let row_start = (x_flat * s_total + s_flat) * self.output_alphabet;
        let y = sample_categorical(
            &self.kernel[row_start..row_start + self.output_alphabet],
            rng,
        );
        Ok((s_space.unflatten(s_flat), y))
    }

    /// Parses the JSON wire format.
    ///
    /// Structure: `num_senders`, `input_alphabets`, `state_alphabets`,
    /// `output_alphabet`, a kernel nested as `[x_1]..[x_K][s_1]..[s_K][y]`,
    /// a state distribution nested as `[s_1]..[s_K]`, and one `[s][s_hat]`
    /// distortion matrix per sender. Shape problems surface as `Parse`;
    /// probabilistic invariants are left to [`SdMacSpec::validate`].
    pub fn from_json_str(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::Parse("top level must be an object".into()))?;
        let num_senders = get_usize(obj, "num_senders")?;
        let input_alphabets = get_usize_vec(obj, "input_alphabets")?;
        let state_alphabets = get_usize_vec(obj, "state_alphabets")?;
        let output_alphabet = get_usize(obj, "output_alphabet")?;
        if input_alphabets.len() != num_senders {
            return Err(Error::Parse(format!(
                "num_senders={} does not match input_alphabets of length {}",
                num_senders,
                input_alphabets.len()
            )));
        }
        let mut kernel_dims: Vec<usize> = input_alphabets.clone();
        kernel_dims.extend(&state_alphabets);
        kernel_dims.push(output_alphabet);
        let kernel = collect_nested(require(obj, "kernel")?, &kernel_dims, "kernel")?;
        let state_dist = collect_nested(require(obj, "state_dist")?, &state_alphabets, "state_dist")?;
        let dist_value = require(obj, "distortion")?;
        let dist_arr = dist_value
            .as_array()
            .ok_or_else(|| Error::Parse("distortion must be an array".into()))?;
        if dist_arr.len() != num_senders {
            return Err(Error::Parse(format!(
                "distortion must have one matrix per sender, got {}",
                dist_arr.len()
            )));
        }
        let mut distortion = Vec::with_capacity(num_senders);
        for (k, m) in dist_arr.iter().enumerate() {
            let side = *state_alphabets.get(k).ok_or_else(|| {
                Error::Parse("state_alphabets shorter than num_senders".into())
            })?;
            distortion.push(collect_nested(m, &[side, side], "distortion")?);
        }
        SdMacSpec::new(
            input_alphabets,
            state_alphabets,
            output_alphabet,
            kernel,
            state_dist,
            distortion,
        )
    }

    /// Serializes to the JSON wire format parsed by
    /// [`SdMacSpec::from_json_str`]. Non-finite entries become `null`.
    pub fn to_json_string(&self) -> String {
        let mut kernel_dims: Vec<usize> = self.input_alphabets.clone();
        kernel_dims.extend(&self.state_alphabets);
        kernel_dims.push(self.output_alphabet);
        let mut obj = Map::new();
        obj.insert("num_senders".into(), Value::from(self.num_senders));
        obj.insert(
            "input_alphabets".into(),
            Value::from(self.input_alphabets.clone()),
        );
        obj.insert(
            "state_alphabets".into(),
            Value::from(self.state_alphabets.clone()),
        );
        obj.insert("output_alphabet".into(), Value::from(self.output_alphabet));
        obj.insert("kernel".into(), nest(&self.kernel, &kernel_dims));
        obj.insert(
            "state_dist".into(),
            nest(&self.state_dist, &self.state_alphabets),
        );
        let dist: Vec<Value> = self
            .distortion
            .iter()
            .zip(&self.state_alphabets)
            .map(|(table, &side)| nest(table, &[side, side]))
            .collect();
        obj.insert("distortion".into(), Value::Array(dist));
        serde_json::to_string_pretty(&Value::Object(obj)).expect("serialization cannot fail")
    }
}

/// Memoryless point-to-point view of the channel: `W(y | x)` after averaging
/// out the states.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedChannel<R> {
    input_alphabets: Vec<usize>,
    output_alphabet: usize,
    rows: Vec<R>,
}

impl<R: Real> AveragedChannel<R> {
    /// Per-sender input alphabet sizes.
    pub fn input_alphabets(&self) -> &[usize] {
        &self.input_alphabets
    }

    /// Output alphabet size.
    pub fn output_alphabet(&self) -> usize {
        self.output_alphabet
    }

    /// Index space of input tuples.
    pub fn input_space(&self) -> TupleSpace {
        TupleSpace::new(&self.input_alphabets)
    }

    /// Output distribution of the input tuple with flat index `x_flat`.
    pub fn row(&self, x_flat: usize) -> &[R] {
        &self.rows[x_flat * self.output_alphabet..(x_flat + 1) * self.output_alphabet]
    }

    /// Probability `W_avg(y | x)`.
    pub fn prob(&self, x_flat: usize, y: usize) -> R {
        self.rows[x_flat * self.output_alphabet + y]
    }
}

/// Samples an index proportionally to `weights` using one uniform draw.
///
/// Weights are interpreted in `f64`; rounding slack at the top of the
/// cumulative sum falls back to the last positive weight.
pub(crate) fn sample_categorical<R: Real, G: Rng + ?Sized>(weights: &[R], rng: &mut G) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0f64;
    let mut last_positive = 0usize;
    for (i, &w) in weights.iter().enumerate() {
        let w = w.to_f64().unwrap_or(0.0);
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

fn require<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::Parse(format!("missing field {key}")))
}

fn get_usize(obj: &Map<String, Value>, key: &str) -> Result<usize> {
    require(obj, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::Parse(format!("{key} must be a nonnegative integer")))
}

fn get_usize_vec(obj: &Map<String, Value>, key: &str) -> Result<Vec<usize>> {
    let arr = require(obj, key)?
        .as_array()
        .ok_or_else(|| Error::Parse(format!("{key} must be an array")))?;
    arr.iter()
        .map(|v| {
            v.as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Parse(format!("{key} entries must be nonnegative integers")))
        })
        .collect()
}

fn collect_nested<R: Real>(value: &Value, dims: &[usize], table: &str) -> Result<Vec<R>> {
    let mut out = Vec::with_capacity(dims.iter().product());
    let mut path = Vec::new();
    collect_rec(value, dims, table, &mut path, &mut out)?;
    Ok(out)
}

fn collect_rec<R: Real>(
    value: &Value,
    dims: &[usize],
    table: &str,
    path: &mut Vec<usize>,
    out: &mut Vec<R>,
) -> Result<()> {
    match dims.split_first() {
        None => {
            let v = value.as_f64().ok_or_else(|| {
                Error::Parse(format!("{table}{path:?}: expected a number"))
            })?;
            out.push(R::from_f64_lossy(v));
            Ok(())
        }
        Some((&d, rest)) => {
            let arr = value.as_array().ok_or_else(|| {
                Error::Parse(format!("{table}{path:?}: expected an array of length {d}"))
            })?;
            if arr.len() != d {
                return Err(Error::Parse(format!(
                    "{table}{path:?}: expected length {d}, got {}",
                    arr.len()
                )));
            }
            for (i, child) in arr.iter().enumerate() {
                path.push(i);
                collect_rec(child, rest, table, path, out)?;
                path.pop();
            }
            Ok(())
        }
    }
}

fn nest<R: Real>(flat: &[R], dims: &[usize]) -> Value {
    match dims.split_first() {
        None => {
            let v = flat[0].to_f64().unwrap_or(f64::NAN);
            serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
        }
        Some((&d, rest)) => {
            let chunk = flat.len() / d;
            Value::Array(
                (0..d)
                    .map(|i| nest(&flat[i * chunk..(i + 1) * chunk], rest))
                    .collect(),
            )
        }
    }
}

/// Square Hamming distortion table of the given side: 0 on the diagonal,
/// 1 elsewhere.
pub fn hamming_distortion<R: Real>(side: usize) -> Vec<R> {
    let mut table = vec![R::one(); side * side];
    for s in 0..side {
        table[s * side + s] = R::zero();
    }
    table
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    use super::*;

    fn two_sender_test_channel() -> SdMacSpec<f64> {
        // Y = (X1 AND S1) XOR (X2 AND S2), states Bernoulli(0.2) each.
        let x_space = TupleSpace::new(&[2, 2]);
        let s_space = TupleSpace::new(&[2, 2]);
        let mut kernel = vec![0.0; 4 * 4 * 2];
        for (xf, x) in x_space.iter().enumerate() {
            for (sf, s) in s_space.iter().enumerate() {
                let y = (x[0] & s[0]) ^ (x[1] & s[1]);
                kernel[(xf * 4 + sf) * 2 + y] = 1.0;
            }
        }
        let p = 0.2;
        let mut state_dist = vec![0.0; 4];
        for (sf, s) in s_space.iter().enumerate() {
            let p1 = if s[0] == 1 { p } else { 1.0 - p };
            let p2 = if s[1] == 1 { p } else { 1.0 - p };
            state_dist[sf] = p1 * p2;
        }
        SdMacSpec::new(
            vec![2, 2],
            vec![2, 2],
            2,
            kernel,
            state_dist,
            vec![hamming_distortion(2), hamming_distortion(2)],
        )
        .unwrap()
    }

    #[test]
    fn tuple_space_orders_lexicographically() {
        let space = TupleSpace::new(&[2, 3, 2]);
        assert_eq!(space.len(), 12);
        let all: Vec<Vec<usize>> = space.iter().collect();
        assert_eq!(all[0], vec![0, 0, 0]);
        assert_eq!(all[1], vec![0, 0, 1]);
        assert_eq!(all[2], vec![0, 1, 0]);
        assert_eq!(all[11], vec![1, 2, 1]);
        for (i, t) in all.iter().enumerate() {
            assert_eq!(space.flatten(t), i);
            assert_eq!(space.unflatten(i), *t);
        }
    }

    #[test]
    fn shape_errors_are_reported_at_construction() {
        let err = SdMacSpec::<f64>::new(vec![2], vec![2, 2], 2, vec![], vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }), "{err}");
        let err = SdMacSpec::<f64>::new(
            vec![2],
            vec![2],
            2,
            vec![0.5; 7],
            vec![0.5, 0.5],
            vec![hamming_distortion(2)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("kernel"), "{err}");
    }

    #[test]
    fn validate_accepts_the_test_channel() {
        two_sender_test_channel().validate().unwrap();
    }

    #[test]
    fn validate_reports_row_and_entry_violations() {
        let mut spec = two_sender_test_channel();
        // Row (x1,x2)=(0,1), (s1,s2)=(1,0) is flat row 1*4+2=6.
        spec.kernel[(1 * 4 + 2) * 2] = 0.5;
        spec.kernel[(1 * 4 + 2) * 2 + 1] = 0.4;
        match spec.validate().unwrap_err() {
            Error::NonStochasticRow { x, s, sum } => {
                assert_eq!(x, vec![0, 1]);
                assert_eq!(s, vec![1, 0]);
                assert!((sum - 0.9).abs() < 1e-15);
            }
            other => panic!("unexpected error {other}"),
        }

        let mut spec = two_sender_test_channel();
        spec.state_dist[3] = -spec.state_dist[3];
        match spec.validate().unwrap_err() {
            Error::NegativeEntry { table, index, .. } => {
                assert_eq!(table, "state_dist");
                assert_eq!(index, vec![1, 1]);
            }
            other => panic!("unexpected error {other}"),
        }

        let mut spec = two_sender_test_channel();
        spec.distortion[1][2] = -1.0;
        match spec.validate().unwrap_err() {
            Error::NegativeEntry { table, index, .. } => {
                assert_eq!(table, "distortion");
                assert_eq!(index, vec![1, 1, 0]);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn averaged_channel_matches_hand_computation() {
        let avg = two_sender_test_channel().average_channel();
        let space = avg.input_space();
        // P(Y=1 | x): (0,0) -> 0, (0,1) -> 0.2, (1,0) -> 0.2,
        // (1,1) -> p(1-p) + (1-p)p = 0.32.
        let expect = [0.0, 0.2, 0.2, 0.32];
        for (xf, want) in expect.iter().enumerate() {
            assert!((avg.prob(xf, 1) - want).abs() < 1e-15, "x={:?}", space.unflatten(xf));
            assert!((avg.row(xf).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn averaged_channel_is_linear_in_the_state_distribution() {
        let base = two_sender_test_channel();
        let mut shifted = base.clone();
        shifted.state_dist = vec![0.4, 0.1, 0.3, 0.2];
        let lambda = 0.3;
        let mut mixed = base.clone();
        for i in 0..4 {
            mixed.state_dist[i] = lambda * base.state_dist[i] + (1.0 - lambda) * shifted.state_dist[i];
        }
        let (a, b, m) = (
            base.average_channel(),
            shifted.average_channel(),
            mixed.average_channel(),
        );
        for xf in 0..4 {
            for y in 0..2 {
                let want = lambda * a.prob(xf, y) + (1.0 - lambda) * b.prob(xf, y);
                assert!((m.prob(xf, y) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible_and_validates_inputs() {
        let spec = two_sender_test_channel();
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32)
                .map(|_| spec.sample_use(&[1, 1], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = spec.sample_use(&[1], &mut rng).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }), "{err}");
        let err = spec.sample_use(&[1, 2], &mut rng).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfAlphabet { .. }), "{err}");
    }

    #[test]
    fn sample_frequencies_match_the_state_distribution() {
        let spec = two_sender_test_channel();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let trials = 100_000u32;
        let mut state_counts = [0u32; 4];
        let mut y_counts = [0u32; 2];
        let s_space = spec.state_space();
        for _ in 0..trials {
            let (s, y) = spec.sample_use(&[1, 1], &mut rng).unwrap();
            state_counts[s_space.flatten(&s)] += 1;
            y_counts[y] += 1;
        }
        // Chi-squared goodness of fit at the 0.999 quantile.
        let crit3 = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
        let mut stat = 0.0;
        for sf in 0..4 {
            let expected = spec.state_prob(sf) * trials as f64;
            stat += (state_counts[sf] as f64 - expected).powi(2) / expected;
        }
        assert!(stat < crit3, "state chi2 {stat} >= {crit3}");
        let crit1 = ChiSquared::new(1.0).unwrap().inverse_cdf(0.999);
        let avg = spec.average_channel();
        let mut stat = 0.0;
        for y in 0..2 {
            let expected = avg.prob(3, y) * trials as f64;
            stat += (y_counts[y] as f64 - expected).powi(2) / expected;
        }
        assert!(stat < crit1, "output chi2 {stat} >= {crit1}");
    }

    #[test]
    fn json_round_trip_preserves_the_channel() {
        let spec = two_sender_test_channel();
        let text = spec.to_json_string();
        let back = SdMacSpec::<f64>::from_json_str(&text).unwrap();
        assert_eq!(spec, back);
        back.validate().unwrap();
        // Key order and formatting are deterministic.
        assert_eq!(text, back.to_json_string());
    }

    #[test]
    fn malformed_json_is_rejected_with_parse_errors() {
        let spec = two_sender_test_channel();
        let good = spec.to_json_string();

        let err = SdMacSpec::<f64>::from_json_str("{").unwrap_err();
        assert!(err.to_string().starts_with("Parse"), "{err}");

        let missing = good.replace("\"state_dist\"", "\"state_dists\"");
        let err = SdMacSpec::<f64>::from_json_str(&missing).unwrap_err();
        assert!(err.to_string().contains("missing field state_dist"), "{err}");

        let bad_count = good.replace("\"num_senders\": 2", "\"num_senders\": 3");
        let err = SdMacSpec::<f64>::from_json_str(&bad_count).unwrap_err();
        assert!(err.to_string().contains("num_senders"), "{err}");

        // A kernel leaf replaced by a string fails with the nested path.
        let bad_leaf = good.replacen("1.0", "\"1.0\"", 1);
        let err = SdMacSpec::<f64>::from_json_str(&bad_leaf).unwrap_err();
        assert!(err.to_string().contains("expected a number"), "{err}");
    }

    #[test]
    fn single_sender_degenerate_alphabets_work() {
        // |X|=1, |S|=2, |Y|=1: the only kernel rows map to the single output.
        let spec = SdMacSpec::<f64>::new(
            vec![1],
            vec![2],
            1,
            vec![1.0, 1.0],
            vec![0.7, 0.3],
            vec![hamming_distortion(2)],
        )
        .unwrap();
        spec.validate().unwrap();
        let avg = spec.average_channel();
        assert_eq!(avg.row(0), &[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (s, y) = spec.sample_use(&[0], &mut rng).unwrap();
        assert_eq!(y, 0);
        assert!(s[0] < 2);
    }

    #[test]
    fn hamming_table_has_zero_diagonal() {
        let d: Vec<f64> = hamming_distortion(3);
        for s in 0..3 {
            for t in 0..3 {
                assert_eq!(d[s * 3 + t], if s == t { 0.0 } else { 1.0 });
            }
        }
    }
}
