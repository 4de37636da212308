//! Optimal per-sender state estimators and minimal sensing distortions.
//!
//! Sender `k` estimates its own state from its transmitted symbol and the
//! fed-back output. The conditional law of `(S_k, Y)` given `X_k` depends on
//! what the other senders transmit, so every computation here takes an
//! explicit [`InputModel`] fixing the other senders' inputs as point masses
//! or distributions. The optimal estimator minimizes posterior expected
//! distortion cell by cell; the minimal distortion of a symbol or of an
//! input distribution follows by averaging.

use crate::channel::SdMacSpec;
use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::scalar::Real;

/// What one sender feeds into the channel.
#[derive(Clone, Debug, PartialEq)]
pub enum SenderInput<R> {
    /// The sender transmits this symbol.
    Symbol(usize),
    /// The sender draws symbols i.i.d. from this distribution.
    Distribution(Vec<R>),
}

/// Input assumption for every sender.
#[derive(Clone, Debug, PartialEq)]
pub struct InputModel<R> {
    senders: Vec<SenderInput<R>>,
}

impl<R: Real> InputModel<R> {
    /// Model from one [`SenderInput`] per sender.
    pub fn new(senders: Vec<SenderInput<R>>) -> Self {
        InputModel { senders }
    }

    /// Point-mass model at a joint symbol tuple.
    pub fn from_symbols(x: &[usize]) -> Self {
        InputModel {
            senders: x.iter().map(|&s| SenderInput::Symbol(s)).collect(),
        }
    }

    /// Product-distribution model.
    pub fn from_distributions(dists: Vec<Vec<R>>) -> Self {
        InputModel {
            senders: dists.into_iter().map(SenderInput::Distribution).collect(),
        }
    }

    /// Per-sender inputs.
    pub fn senders(&self) -> &[SenderInput<R>] {
        &self.senders
    }

    /// Probability that sender `k` transmits symbol `x`.
    pub fn prob(&self, k: usize, x: usize) -> R {
        match &self.senders[k] {
            SenderInput::Symbol(s) => {
                if *s == x {
                    R::one()
                } else {
                    R::zero()
                }
            }
            SenderInput::Distribution(p) => p[x],
        }
    }

    /// Checks the model against a channel's alphabets.
    pub fn validate(&self, spec: &SdMacSpec<R>) -> Result<()> {
        if self.senders.len() != spec.num_senders() {
            return Err(Error::DimensionMismatch {
                what: "input model".into(),
                expected: spec.num_senders(),
                got: self.senders.len(),
            });
        }
        for (k, input) in self.senders.iter().enumerate() {
            let size = spec.input_alphabets()[k];
            match input {
                SenderInput::Symbol(s) => {
                    if *s >= size {
                        return Err(Error::IndexOutOfAlphabet {
                            axis: format!("input[{k}]"),
                            index: *s,
                            size,
                        });
                    }
                }
                SenderInput::Distribution(p) => {
                    validate_distribution(p, size, &format!("input distribution of sender {k}"))?;
                }
            }
        }
        Ok(())
    }
}

/// Checks that `p` is a probability vector of the given length.
pub(crate) fn validate_distribution<R: Real>(p: &[R], size: usize, what: &str) -> Result<()> {
    if p.len() != size {
        return Err(Error::DimensionMismatch {
            what: what.into(),
            expected: size,
            got: p.len(),
        });
    }
    let mut sum = R::zero();
    for (i, &v) in p.iter().enumerate() {
        if v < R::zero() {
            return Err(Error::NegativeEntry {
                table: "distribution",
                index: vec![i],
                value: v.to_f64().unwrap_or(f64::NAN),
            });
        }
        sum += v;
    }
    if (sum - R::one()).abs() > R::prob_tol() {
        return Err(Error::InvalidParameter(format!(
            "{what} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Joint and conditional law of `(S_k, Y)` given sender `k`'s symbol.
///
/// `joint(x, y, s)` is the unnormalized weight `P(S_k=s, Y=y | X_k=x)` under
/// the model for the other senders; `posterior` is its normalization over
/// `s`, left at zero where the `(x, y)` cell has zero probability.
#[derive(Clone, Debug)]
pub struct PosteriorTable<R> {
    sender: usize,
    input_size: usize,
    output_size: usize,
    state_size: usize,
    joint: Vec<R>,
    marginal: Vec<R>,
    posterior: Vec<R>,
}

impl<R: Real> PosteriorTable<R> {
    /// Sender this table belongs to.
    pub fn sender(&self) -> usize {
        self.sender
    }

    /// True when the `(x, y)` cell has positive probability.
    pub fn defined(&self, x: usize, y: usize) -> bool {
        self.marginal[x * self.output_size + y] > R::zero()
    }

    /// Posterior over `S_k` at a cell, or `UndefinedConditional` when the
    /// cell has zero probability.
    pub fn at(&self, x: usize, y: usize) -> Result<&[R]> {
        if !self.defined(x, y) {
            return Err(Error::UndefinedConditional {
                sender: self.sender,
                x,
                y,
            });
        }
        Ok(self.posterior_row(x, y))
    }

    /// Posterior row without the definedness check (zeros when undefined).
    pub fn posterior_row(&self, x: usize, y: usize) -> &[R] {
        let base = (x * self.output_size + y) * self.state_size;
        &self.posterior[base..base + self.state_size]
    }

    /// Unnormalized joint row `P(S_k=.., Y=y | X_k=x)`.
    pub fn joint_row(&self, x: usize, y: usize) -> &[R] {
        let base = (x * self.output_size + y) * self.state_size;
        &self.joint[base..base + self.state_size]
    }

    /// Output probability `P(Y=y | X_k=x)` under the model.
    pub fn output_marginal(&self, x: usize, y: usize) -> R {
        self.marginal[x * self.output_size + y]
    }
}

/// Computes the posterior table of sender `k` under the given model for the
/// other senders. Sender `k`'s own entry in the model is ignored.
pub fn posterior<R: Real>(
    spec: &SdMacSpec<R>,
    model: &InputModel<R>,
    k: usize,
) -> Result<PosteriorTable<R>> {
    model.validate(spec)?;
    if k >= spec.num_senders() {
        return Err(Error::IndexOutOfAlphabet {
            axis: "sender".into(),
            index: k,
            size: spec.num_senders(),
        });
    }
    let input_size = spec.input_alphabets()[k];
    let output_size = spec.output_alphabet();
    let state_size = spec.state_alphabets()[k];
    let x_space = spec.input_space();
    let s_space = spec.state_space();
    let mut joint = vec![R::zero(); input_size * output_size * state_size];
    let mut x = vec![0usize; spec.num_senders()];
    let mut s = vec![0usize; spec.num_senders()];
    for x_flat in 0..x_space.len() {
        x_space.unflatten_into(x_flat, &mut x);
        let mut w = R::one();
        for (j, &xj) in x.iter().enumerate() {
            if j != k {
                w = w * model.prob(j, xj);
            }
        }
        if w == R::zero() {
            continue;
        }
        let xk = x[k];
        for s_flat in 0..s_space.len() {
            let ps = spec.state_prob(s_flat);
            if ps == R::zero() {
                continue;
            }
            s_space.unflatten_into(s_flat, &mut s);
            let sk = s[k];
            let weight = w * ps;
            for y in 0..output_size {
                let p = spec.kernel_prob(x_flat, s_flat, y);
                if p > R::zero() {
                    joint[(xk * output_size + y) * state_size + sk] += weight * p;
                }
            }
        }
    }
    let mut marginal = vec![R::zero(); input_size * output_size];
    let mut post = vec![R::zero(); joint.len()];
    for cell in 0..input_size * output_size {
        let base = cell * state_size;
        let m: R = joint[base..base + state_size].iter().copied().sum();
        marginal[cell] = m;
        if m > R::zero() {
            for sk in 0..state_size {
                post[base + sk] = joint[base + sk] / m;
            }
        }
    }
    Ok(PosteriorTable {
        sender: k,
        input_size,
        output_size,
        state_size,
        joint,
        marginal,
        posterior: post,
    })
}

/// Optimal deterministic estimator of sender `k`'s state, one estimate per
/// `(x_k, y)` cell, together with the posterior it was derived from.
#[derive(Clone, Debug)]
pub struct EstimatorTable<R> {
    table: PosteriorTable<R>,
    map: Vec<usize>,
    cell_distortion: Vec<R>,
    distortion: Vec<R>,
    state_size: usize,
}

impl<R: Real> EstimatorTable<R> {
    /// Sender this estimator belongs to.
    pub fn sender(&self) -> usize {
        self.table.sender
    }

    /// Estimate for the `(x, y)` cell (state 0 in undefined cells).
    pub fn estimate(&self, x: usize, y: usize) -> usize {
        self.map[x * self.table.output_size + y]
    }

    /// Posterior expected distortion of the chosen estimate in this cell.
    pub fn cell_distortion(&self, x: usize, y: usize) -> R {
        self.cell_distortion[x * self.table.output_size + y]
    }

    /// Underlying posterior table.
    pub fn posterior(&self) -> &PosteriorTable<R> {
        &self.table
    }

    /// Minimal distortion `d*_k(x)`: the expectation of
    /// `d_k(S_k, estimate(x, Y))` over `(S_k, Y)` given `X_k = x`.
    ///
    /// Summed directly from the unnormalized joint weights, so no
    /// normalize-then-multiply round trip loses precision.
    pub fn symbol_distortion(&self, x: usize) -> R {
        let mut total = R::zero();
        for y in 0..self.table.output_size {
            let row = self.table.joint_row(x, y);
            let s_hat = self.estimate(x, y);
            for (s, &w) in row.iter().enumerate() {
                if w > R::zero() {
                    total += w * self.distortion[s * self.state_size + s_hat];
                }
            }
        }
        total
    }

    /// CSV export with columns
    /// `k,x_k,y,s_hat,posterior_0..posterior_{S-1},cell_distortion`,
    /// one row per `(x_k, y)` cell in lexicographic order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,x_k,y,s_hat");
        for s in 0..self.state_size {
            out.push_str(&format!(",posterior_{s}"));
        }
        out.push_str(",cell_distortion\n");
        for x in 0..self.table.input_size {
            for y in 0..self.table.output_size {
                out.push_str(&format!(
                    "{},{},{},{}",
                    self.table.sender,
                    x,
                    y,
                    self.estimate(x, y)
                ));
                for &p in self.table.posterior_row(x, y) {
                    out.push(',');
                    out.push_str(&sig9(p));
                }
                out.push(',');
                out.push_str(&sig9(self.cell_distortion(x, y)));
                out.push('\n');
            }
        }
        out
    }
}

/// Builds the distortion-optimal estimator for sender `k` under the model.
///
/// Each `(x, y)` cell takes the estimate minimizing posterior expected
/// distortion, ties broken by the smallest state index. Zero-probability
/// cells get estimate 0; they never contribute to expectations.
pub fn optimal_estimator<R: Real>(
    spec: &SdMacSpec<R>,
    model: &InputModel<R>,
    k: usize,
) -> Result<EstimatorTable<R>> {
    let table = posterior(spec, model, k)?;
    let state_size = table.state_size;
    let cells = table.input_size * table.output_size;
    let distortion = spec.distortion_matrix(k).to_vec();
    let mut map = vec![0usize; cells];
    let mut cell_distortion = vec![R::zero(); cells];
    for x in 0..table.input_size {
        for y in 0..table.output_size {
            let cell = x * table.output_size + y;
            if !table.defined(x, y) {
                continue;
            }
            let post = table.posterior_row(x, y);
            let mut best = R::infinity();
            let mut best_s = 0usize;
            for s_hat in 0..state_size {
                let mut e = R::zero();
                for (s, &p) in post.iter().enumerate() {
                    if p > R::zero() {
                        e += p * distortion[s * state_size + s_hat];
                    }
                }
                if e < best {
                    best = e;
                    best_s = s_hat;
                }
            }
            map[cell] = best_s;
            cell_distortion[cell] = best;
        }
    }
    Ok(EstimatorTable {
        table,
        map,
        cell_distortion,
        distortion,
        state_size,
    })
}

/// Minimal distortion `d*_k(x_k)` of one symbol under the model.
pub fn symbol_distortion<R: Real>(
    spec: &SdMacSpec<R>,
    model: &InputModel<R>,
    k: usize,
    x_k: usize,
) -> Result<R> {
    if k < spec.num_senders() && x_k >= spec.input_alphabets()[k] {
        return Err(Error::IndexOutOfAlphabet {
            axis: format!("input[{k}]"),
            index: x_k,
            size: spec.input_alphabets()[k],
        });
    }
    Ok(optimal_estimator(spec, model, k)?.symbol_distortion(x_k))
}

/// Minimal distortion `d*_k(P_k)` of an input distribution: the `P_k`-average
/// of the per-symbol distortions, all evaluated under the same model for the
/// other senders.
pub fn distribution_distortion<R: Real>(
    spec: &SdMacSpec<R>,
    model: &InputModel<R>,
    k: usize,
    p_k: &[R],
) -> Result<R> {
    if k >= spec.num_senders() {
        return Err(Error::IndexOutOfAlphabet {
            axis: "sender".into(),
            index: k,
            size: spec.num_senders(),
        });
    }
    validate_distribution(p_k, spec.input_alphabets()[k], "distribution_distortion input")?;
    let est = optimal_estimator(spec, model, k)?;
    let mut total = R::zero();
    for (x, &p) in p_k.iter().enumerate() {
        if p > R::zero() {
            total += p * est.symbol_distortion(x);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use crate::binary_adder::{build, BinaryAdderParams};
    use crate::channel::hamming_distortion;

    use super::*;

    fn adder() -> SdMacSpec<f64> {
        build(BinaryAdderParams { p_s: 0.2 }).unwrap()
    }

    #[test]
    fn posterior_values_on_the_adder() {
        let spec = adder();
        let model = InputModel::from_symbols(&[1, 1]);
        let table = posterior(&spec, &model, 0).unwrap();
        // x_1=1, y=1: S_1=1 and S_2=0, or S_1=0 and S_2=1; both weigh
        // 0.2*0.8, so the posterior is uniform.
        let p = table.at(1, 1).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
        // x_1=1, y=0: weights 0.64 (s=(0,0)) and 0.04 (s=(1,1)).
        let p = table.at(1, 0).unwrap();
        assert!((p[0] - 0.64 / 0.68).abs() < 1e-15);
        assert!((p[1] - 0.04 / 0.68).abs() < 1e-15);
        assert!((table.output_marginal(1, 0) - 0.68).abs() < 1e-15);
    }

    #[test]
    fn silent_sender_posterior_equals_the_prior() {
        // With x_1=0 the output carries no information about S_1.
        let spec = adder();
        for other in [
            InputModel::new(vec![
                SenderInput::Symbol(0),
                SenderInput::Distribution(vec![0.3, 0.7]),
            ]),
            InputModel::from_symbols(&[0, 1]),
        ] {
            let table = posterior(&spec, &other, 0).unwrap();
            for y in 0..2 {
                if !table.defined(0, y) {
                    continue;
                }
                let p = table.at(0, y).unwrap();
                assert!((p[0] - 0.8).abs() < 1e-15, "y={y}");
                assert!((p[1] - 0.2).abs() < 1e-15, "y={y}");
            }
        }
    }

    #[test]
    fn undefined_cells_are_reported_and_skipped() {
        let spec = adder();
        // Both senders silent: y=1 has zero probability.
        let model = InputModel::from_symbols(&[0, 0]);
        let table = posterior(&spec, &model, 0).unwrap();
        assert!(table.defined(0, 0));
        assert!(!table.defined(0, 1));
        match table.at(0, 1).unwrap_err() {
            Error::UndefinedConditional { sender, x, y } => {
                assert_eq!((sender, x, y), (0, 0, 1));
            }
            other => panic!("unexpected error {other}"),
        }
        // The estimator fills the cell with state 0 and zero distortion.
        let est = optimal_estimator(&spec, &model, 0).unwrap();
        assert_eq!(est.estimate(0, 1), 0);
        assert_eq!(est.cell_distortion(0, 1), 0.0);
    }

    #[test]
    fn single_state_alphabet_posterior_is_one() {
        let spec: SdMacSpec<f64> = SdMacSpec::new(
            vec![2],
            vec![1],
            2,
            vec![0.9, 0.1, 0.2, 0.8],
            vec![1.0],
            vec![vec![0.3]],
        )
        .unwrap();
        let model = InputModel::from_symbols(&[0]);
        let table = posterior(&spec, &model, 0).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(table.at(x, y).unwrap(), &[1.0]);
            }
        }
        // The constant estimator pays d(0,0) = 0.3 everywhere.
        let d = symbol_distortion(&spec, &model, 0, 1).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
    }

    #[test]
    fn map_estimation_under_hamming_distortion() {
        let spec = adder();
        let model = InputModel::from_symbols(&[1, 1]);
        let est = optimal_estimator(&spec, &model, 0).unwrap();
        // y=0: posterior favors S_1=0 (0.64/0.68); y=1: tie, smallest index.
        assert_eq!(est.estimate(1, 0), 0);
        assert_eq!(est.estimate(1, 1), 0);
        assert!((est.cell_distortion(1, 0) - 0.04 / 0.68).abs() < 1e-15);
        assert!((est.cell_distortion(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tie_breaking_picks_the_smallest_state() {
        // Uniform posterior with a symmetric distortion: every estimate is
        // equally good, so the estimator must return state 0.
        let spec = SdMacSpec::new(
            vec![1],
            vec![2],
            2,
            vec![0.5, 0.5, 0.5, 0.5],
            vec![0.5, 0.5],
            vec![hamming_distortion(2)],
        )
        .unwrap();
        let model = InputModel::from_symbols(&[0]);
        let est = optimal_estimator(&spec, &model, 0).unwrap();
        assert_eq!(est.estimate(0, 0), 0);
        assert_eq!(est.estimate(0, 1), 0);
    }

    #[test]
    fn table_one_symbol_distortions() {
        let spec = adder();
        let cases = [
            ([0usize, 1], 0, 0, 0.2),
            ([0, 1], 1, 1, 0.0),
            ([1, 0], 0, 1, 0.0),
            ([1, 0], 1, 0, 0.2),
            ([1, 1], 0, 1, 0.2),
            ([1, 1], 1, 1, 0.2),
            ([0, 0], 0, 0, 0.2),
        ];
        for (x, k, xk, want) in cases {
            let model = InputModel::from_symbols(&x);
            let d = symbol_distortion(&spec, &model, k, xk).unwrap();
            assert!((d - want).abs() < 1e-15, "x={x:?} k={k}: {d} vs {want}");
        }
    }

    #[test]
    fn state_independent_channel_reduces_to_prior_bayes() {
        // Kernel ignores the state entirely: d* equals the prior Bayes
        // distortion min_shat E d(S, shat).
        let spec: SdMacSpec<f64> = SdMacSpec::new(
            vec![2],
            vec![2],
            2,
            vec![0.9, 0.1, 0.9, 0.1, 0.3, 0.7, 0.3, 0.7],
            vec![0.6, 0.4],
            vec![vec![0.0, 1.0, 2.0, 0.0]],
        )
        .unwrap();
        let model = InputModel::from_symbols(&[0]);
        // Prior Bayes: shat=0 costs 0.4*2=0.8, shat=1 costs 0.6*1=0.6.
        for x in 0..2 {
            let d = symbol_distortion(&spec, &model, 0, x).unwrap();
            assert!((d - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn distribution_distortion_mixes_symbol_distortions() {
        let spec = adder();
        let model = InputModel::from_distributions(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let d0 = symbol_distortion(&spec, &model, 0, 0).unwrap();
        let d1 = symbol_distortion(&spec, &model, 0, 1).unwrap();
        let mixed = distribution_distortion(&spec, &model, 0, &[0.25, 0.75]).unwrap();
        assert!((mixed - (0.25 * d0 + 0.75 * d1)).abs() < 1e-15);
        // A point mass reduces to the symbol distortion.
        let point = distribution_distortion(&spec, &model, 0, &[0.0, 1.0]).unwrap();
        assert!((point - d1).abs() < 1e-15);
    }

    #[test]
    fn uniform_inputs_match_a_direct_enumeration() {
        // Independent 32-term sum over (x_2, s_1, s_2, y) for each x_1.
        let spec = adder();
        let model = InputModel::from_distributions(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let p = 0.2;
        let prior = [1.0 - p, p];
        let mut expect = 0.0;
        for x1 in 0..2usize {
            // Build joint weights over (s_1, y).
            let mut joint = [[0.0f64; 2]; 2];
            for x2 in 0..2usize {
                for s1 in 0..2usize {
                    for s2 in 0..2usize {
                        let y = (x1 & s1) ^ (x2 & s2);
                        joint[s1][y] += 0.5 * prior[s1] * prior[s2];
                    }
                }
            }
            for y in 0..2 {
                expect += 0.5 * joint[0][y].min(joint[1][y]);
            }
        }
        let d = distribution_distortion(&spec, &model, 0, &[0.5, 0.5]).unwrap();
        assert!((d - expect).abs() < 1e-12, "{d} vs {expect}");
    }

    #[test]
    fn model_validation_errors() {
        let spec = adder();
        let err = InputModel::<f64>::from_symbols(&[1])
            .validate(&spec)
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }), "{err}");
        let err = InputModel::<f64>::from_symbols(&[1, 2])
            .validate(&spec)
            .unwrap_err();
        assert!(matches!(err, Error::IndexOutOfAlphabet { .. }), "{err}");
        let err = InputModel::from_distributions(vec![vec![0.5, 0.6], vec![0.5, 0.5]])
            .validate(&spec)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)), "{err}");
        let err = distribution_distortion(
            &spec,
            &InputModel::from_symbols(&[1, 1]),
            0,
            &[-0.1, 1.1],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NegativeEntry { .. }), "{err}");
    }

    #[test]
    fn csv_export_layout() {
        let spec = adder();
        let model = InputModel::from_symbols(&[1, 1]);
        let est = optimal_estimator(&spec, &model, 0).unwrap();
        let csv = est.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,x_k,y,s_hat,posterior_0,posterior_1,cell_distortion");
        assert_eq!(lines.len(), 1 + 4);
        assert_eq!(
            lines[3],
            "0,1,0,0,0.941176471,0.0588235294,0.0588235294"
        );
        assert!(csv.ends_with('\n'));
        assert!(!csv.contains('\r'));
    }
}
