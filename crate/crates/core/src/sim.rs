//! Monte Carlo evaluation of built identification codes.
//!
//! Each trial samples identities, runs the full feedback protocol over `m`
//! channel uses with states redrawn independently every use, estimates the
//! per-use states with the estimator table matching the current phase's
//! input model, and tests the decoder against the true identity tuple and a
//! wrong one. Proportions carry Wilson 95% intervals; distortion means carry
//! normal intervals from the per-trial standard error.
//!
//! Trials are seeded independently from the root seed through the crate's
//! 64-bit mixing function, so aggregation order never affects results and
//! identical plans reproduce bit-identical statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use crate::channel::SdMacSpec;
use crate::error::{Error, Result};
use crate::estimator::{optimal_estimator, EstimatorTable, InputModel};
use crate::fmt::sig9;
use crate::idf::{decode, encode_step, mix64, CrInput, DecodeDiagnostic, IdfCode};
use crate::scalar::Real;

/// Normal quantile used for all 95% intervals.
pub const WILSON_Z: f64 = 1.959964;

/// How trial identities are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum IdentitySampling {
    /// The same true/wrong identity tuples every trial. Wrong entries must
    /// differ from the true ones wherever a sender has at least two
    /// identities.
    FixedPair {
        true_ids: Vec<u64>,
        wrong_ids: Vec<u64>,
    },
    /// Fresh uniform true identities each trial; the wrong identity is
    /// uniform over the remaining ones.
    Uniform,
}

/// Configuration of one Monte Carlo run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialPlan {
    /// Number of independent trials.
    pub trials: u64,
    /// Root seed; trial `i` derives its own generator from it.
    pub seed: u64,
    /// Identity choice per trial.
    pub identities: IdentitySampling,
    /// Populate the type I (true identity rejected) statistics.
    pub measure_type1: bool,
    /// Populate the type II (wrong identity accepted) statistics.
    pub measure_type2: bool,
    /// Test every wrong identity of every sender instead of one sampled
    /// wrong tuple. Requires every identity count to be at most 32.
    pub per_pair: bool,
}

impl TrialPlan {
    /// Uniform sampling, both error types measured, no per-pair sweep.
    pub fn new(trials: u64, seed: u64) -> Self {
        TrialPlan {
            trials,
            seed,
            identities: IdentitySampling::Uniform,
            measure_type1: true,
            measure_type2: true,
            per_pair: false,
        }
    }
}

/// A binomial proportion with its Wilson 95% interval.
///
/// With zero samples the estimate is 0 and the interval is the whole unit
/// interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proportion<R> {
    /// Number of positive outcomes.
    pub successes: u64,
    /// Number of observations.
    pub samples: u64,
    /// Point estimate `successes / samples`.
    pub estimate: R,
    /// Lower interval end.
    pub lo: R,
    /// Upper interval end.
    pub hi: R,
}

impl<R: Real> Proportion<R> {
    /// Builds the proportion and its interval from counts.
    pub fn from_counts(successes: u64, samples: u64) -> Self {
        if samples == 0 {
            return Proportion {
                successes,
                samples,
                estimate: R::zero(),
                lo: R::zero(),
                hi: R::one(),
            };
        }
        let z = R::from_f64_lossy(WILSON_Z);
        let n = R::from_f64_lossy(samples as f64);
        let p = R::from_f64_lossy(successes as f64) / n;
        let z2 = z * z;
        let denom = R::one() + z2 / n;
        let center = (p + z2 / (n + n)) / denom;
        let four = R::from_f64_lossy(4.0);
        let half = z * (p * (R::one() - p) / n + z2 / (four * n * n)).sqrt() / denom;
        Proportion {
            successes,
            samples,
            estimate: p,
            lo: center - half,
            hi: center + half,
        }
    }

    /// Interval width.
    pub fn width(&self) -> R {
        self.hi - self.lo
    }
}

/// Per-sender outcome statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SenderStats<R> {
    /// Probability that the decoder rejects this sender's true identity.
    pub type1: Proportion<R>,
    /// Probability that the decoder accepts a wrong identity. In per-pair
    /// mode this pools every wrong identity of the sender.
    pub type2: Proportion<R>,
    /// Mean per-use sensing distortion.
    pub distortion_mean: R,
    /// Standard error of the per-trial distortion means.
    pub distortion_se: R,
    /// Normal 95% interval around the mean.
    pub distortion_lo: R,
    /// Upper end of the interval.
    pub distortion_hi: R,
    /// Per-pair mode only: acceptance proportion of each identity over the
    /// trials in which it was a wrong claim.
    pub type2_by_identity: Option<Vec<Proportion<R>>>,
}

/// Aggregated Monte Carlo statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorStats<R> {
    /// Trials aggregated.
    pub trials: u64,
    /// Fraction of trials whose feedback block failed the typicality test.
    pub cr_failure: Proportion<R>,
    /// Fraction of trials whose color block lay in no decoding set.
    pub color_decode_failure: Proportion<R>,
    /// Per-sender statistics.
    pub senders: Vec<SenderStats<R>>,
}

fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn proportion_json<R: Real>(p: &Proportion<R>) -> Value {
    let mut m = Map::new();
    m.insert("successes".into(), Value::from(p.successes));
    m.insert("samples".into(), Value::from(p.samples));
    m.insert(
        "estimate".into(),
        json_f64(p.estimate.to_f64().unwrap_or(f64::NAN)),
    );
    m.insert("lo".into(), json_f64(p.lo.to_f64().unwrap_or(f64::NAN)));
    m.insert("hi".into(), json_f64(p.hi.to_f64().unwrap_or(f64::NAN)));
    Value::Object(m)
}

impl<R: Real> ErrorStats<R> {
    /// Byte-deterministic JSON rendering of the full statistics.
    pub fn to_json_string(&self) -> String {
        let mut obj = Map::new();
        obj.insert("trials".into(), Value::from(self.trials));
        obj.insert("cr_failure".into(), proportion_json(&self.cr_failure));
        obj.insert(
            "color_decode_failure".into(),
            proportion_json(&self.color_decode_failure),
        );
        let senders: Vec<Value> = self
            .senders
            .iter()
            .map(|s| {
                let mut m = Map::new();
                m.insert("type1".into(), proportion_json(&s.type1));
                m.insert("type2".into(), proportion_json(&s.type2));
                m.insert(
                    "distortion_mean".into(),
                    json_f64(s.distortion_mean.to_f64().unwrap_or(f64::NAN)),
                );
                m.insert(
                    "distortion_se".into(),
                    json_f64(s.distortion_se.to_f64().unwrap_or(f64::NAN)),
                );
                m.insert(
                    "distortion_lo".into(),
                    json_f64(s.distortion_lo.to_f64().unwrap_or(f64::NAN)),
                );
                m.insert(
                    "distortion_hi".into(),
                    json_f64(s.distortion_hi.to_f64().unwrap_or(f64::NAN)),
                );
                m.insert(
                    "type2_by_identity".into(),
                    match &s.type2_by_identity {
                        None => Value::Null,
                        Some(v) => Value::Array(v.iter().map(proportion_json).collect()),
                    },
                );
                Value::Object(m)
            })
            .collect();
        obj.insert("senders".into(), Value::Array(senders));
        serde_json::to_string_pretty(&Value::Object(obj)).expect("serialization cannot fail")
    }

    /// CSV rendering, one row per sender. Global failure rates repeat on
    /// every row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,type1,type1_lo,type1_hi,type2,type2_lo,type2_hi,\
             distortion,distortion_se,cr_failure,color_decode_failure\n",
        );
        for (k, s) in self.senders.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                k + 1,
                sig9(s.type1.estimate),
                sig9(s.type1.lo),
                sig9(s.type1.hi),
                sig9(s.type2.estimate),
                sig9(s.type2.lo),
                sig9(s.type2.hi),
                sig9(s.distortion_mean),
                sig9(s.distortion_se),
                sig9(self.cr_failure.estimate),
                sig9(self.color_decode_failure.estimate),
            ));
        }
        out
    }
}

/// Estimator tables reused across trials, one per sensing context: the
/// common-randomness input model, each color-phase position's
/// uniform-over-colors mixture, and the fallback tuple.
struct PhaseTables<R> {
    cr: Vec<EstimatorTable<R>>,
    color: Vec<Vec<EstimatorTable<R>>>,
    fallback: Vec<EstimatorTable<R>>,
}

fn build_tables<R: Real>(spec: &SdMacSpec<R>, code: &IdfCode<R>) -> Result<PhaseTables<R>> {
    let k_count = spec.num_senders();
    let cr_model = match code.cr_input() {
        CrInput::Symbols(x) => InputModel::from_symbols(x),
        CrInput::Product(d) => InputModel::from_distributions(d.clone()),
    };
    let cr = (0..k_count)
        .map(|k| optimal_estimator(spec, &cr_model, k))
        .collect::<Result<Vec<_>>>()?;
    let ccode = code.color_code();
    let mut color = Vec::with_capacity(code.block_len());
    for t in 0..code.block_len() {
        let dists: Vec<Vec<R>> = (0..k_count)
            .map(|j| {
                let mut d = vec![R::zero(); spec.input_alphabets()[j]];
                let m_j = code.colors()[j];
                let w = R::one() / R::from_usize(m_j).unwrap();
                for c in 0..m_j {
                    d[ccode.codeword(j, c)[t]] += w;
                }
                d
            })
            .collect();
        let model = InputModel::from_distributions(dists);
        color.push(
            (0..k_count)
                .map(|k| optimal_estimator(spec, &model, k))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let fb_model = InputModel::from_symbols(code.fallback());
    let fallback = (0..k_count)
        .map(|k| optimal_estimator(spec, &fb_model, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseTables {
        cr,
        color,
        fallback,
    })
}

struct TrialRecord<R> {
    /// Realized distortion per sender and time index.
    step_distortion: Vec<Vec<R>>,
    /// True identity rejected, per sender.
    type1_reject: Vec<bool>,
    /// Sampled wrong identity accepted; `None` when the sender has a single
    /// identity.
    type2_accept: Vec<Option<bool>>,
    /// Per-pair mode: acceptance of every identity that was a wrong claim.
    per_identity: Option<Vec<Vec<Option<bool>>>>,
    cr_failure: bool,
    color_decode_failure: bool,
}

fn validate_plan<R: Real>(code: &IdfCode<R>, plan: &TrialPlan) -> Result<()> {
    if plan.trials == 0 {
        return Err(Error::InvalidParameter(
            "trial count must be positive".into(),
        ));
    }
    let k_count = code.num_senders();
    if let IdentitySampling::FixedPair {
        true_ids,
        wrong_ids,
    } = &plan.identities
    {
        if true_ids.len() != k_count {
            return Err(Error::DimensionMismatch {
                what: "fixed true identities".into(),
                expected: k_count,
                got: true_ids.len(),
            });
        }
        if wrong_ids.len() != k_count {
            return Err(Error::DimensionMismatch {
                what: "fixed wrong identities".into(),
                expected: k_count,
                got: wrong_ids.len(),
            });
        }
        for k in 0..k_count {
            let n_k = code.identities()[k];
            for &id in [true_ids[k], wrong_ids[k]].iter() {
                if id >= n_k {
                    return Err(Error::IndexOutOfAlphabet {
                        axis: format!("identity[{k}]"),
                        index: id as usize,
                        size: n_k as usize,
                    });
                }
            }
            if n_k >= 2 && true_ids[k] == wrong_ids[k] {
                return Err(Error::InvalidParameter(format!(
                    "fixed wrong identity of sender {k} must differ from the true one"
                )));
            }
        }
    }
    if plan.per_pair {
        for (k, &n_k) in code.identities().iter().enumerate() {
            if n_k > 32 {
                return Err(Error::InvalidParameter(format!(
                    "per-pair mode needs at most 32 identities per sender, \
                     sender {k} has {n_k}"
                )));
            }
        }
    }
    Ok(())
}

/// Runs one complete trial. All randomness of the trial comes from a
/// generator seeded as `mix64(root ^ mix64(index + 1))`; identity draws
/// happen first, then the channel uses in time order.
fn simulate_trial<R: Real>(
    spec: &SdMacSpec<R>,
    code: &IdfCode<R>,
    tables: &PhaseTables<R>,
    plan: &TrialPlan,
    index: u64,
) -> Result<TrialRecord<R>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(plan.seed ^ mix64(index + 1)));
    let k_count = code.num_senders();
    let (true_ids, wrong_ids): (Vec<u64>, Vec<Option<u64>>) = match &plan.identities {
        IdentitySampling::FixedPair {
            true_ids,
            wrong_ids,
        } => (
            true_ids.clone(),
            wrong_ids
                .iter()
                .zip(code.identities())
                .map(|(&w, &n_k)| if n_k >= 2 { Some(w) } else { None })
                .collect(),
        ),
        IdentitySampling::Uniform => {
            let true_ids: Vec<u64> = code
                .identities()
                .iter()
                .map(|&n_k| rng.random_range(0..n_k))
                .collect();
            let wrong_ids = true_ids
                .iter()
                .zip(code.identities())
                .map(|(&t, &n_k)| {
                    if n_k >= 2 {
                        let w = rng.random_range(0..n_k - 1);
                        Some(if w >= t { w + 1 } else { w })
                    } else {
                        None
                    }
                })
                .collect();
            (true_ids, wrong_ids)
        }
    };
    let n = code.n();
    let m = code.m();
    let mut feedback: Vec<usize> = Vec::with_capacity(m);
    let mut step_distortion = vec![vec![R::zero(); m]; k_count];
    let mut cr_failure = false;
    let mut x = vec![0usize; k_count];
    for t in 1..=m {
        for (k, xk) in x.iter_mut().enumerate() {
            let step = encode_step(code, k, true_ids[k], t, &feedback, &mut rng)?;
            *xk = step.symbol;
            cr_failure |= step.cr_failure;
        }
        let (s, y) = spec.sample_use(&x, &mut rng)?;
        for k in 0..k_count {
            let table = if t <= n {
                &tables.cr[k]
            } else if cr_failure {
                &tables.fallback[k]
            } else {
                &tables.color[t - n - 1][k]
            };
            let s_hat = table.estimate(x[k], y);
            step_distortion[k][t - 1] = spec.distortion_entry(k, s[k], s_hat);
        }
        feedback.push(y);
    }
    let true_outcome = decode(code, &feedback, &true_ids)?;
    let type1_reject: Vec<bool> = true_outcome.verdicts.iter().map(|&v| !v).collect();
    let color_decode_failure =
        true_outcome.diagnostic == DecodeDiagnostic::ColorDecodeFailure;
    let type2_accept: Vec<Option<bool>> = if wrong_ids.iter().any(|w| w.is_some()) {
        let claim: Vec<u64> = wrong_ids
            .iter()
            .zip(&true_ids)
            .map(|(w, &t)| w.unwrap_or(t))
            .collect();
        let outcome = decode(code, &feedback, &claim)?;
        wrong_ids
            .iter()
            .zip(&outcome.verdicts)
            .map(|(w, &v)| w.map(|_| v))
            .collect()
    } else {
        vec![None; k_count]
    };
    let per_identity = if plan.per_pair {
        let y_n = &feedback[..n];
        Some(
            (0..k_count)
                .map(|k| {
                    (0..code.identities()[k])
                        .map(|j| {
                            if j == true_ids[k] {
                                return None;
                            }
                            Some(match &true_outcome.colors {
                                Some(colors) => {
                                    code.coloring(k, j).eval(y_n) == colors[k]
                                }
                                None => false,
                            })
                        })
                        .collect()
                })
                .collect(),
        )
    } else {
        None
    };
    Ok(TrialRecord {
        step_distortion,
        type1_reject,
        type2_accept,
        per_identity,
        cr_failure,
        color_decode_failure,
    })
}

/// Runs the full Monte Carlo plan and aggregates error and distortion
/// statistics.
pub fn run_trials<R: Real>(
    spec: &SdMacSpec<R>,
    code: &IdfCode<R>,
    plan: &TrialPlan,
) -> Result<ErrorStats<R>> {
    validate_plan(code, plan)?;
    let tables = build_tables(spec, code)?;
    let k_count = code.num_senders();
    let m = code.m();
    let m_r = R::from_usize(m).unwrap();
    let t_r = R::from_f64_lossy(plan.trials as f64);
    let mut type1 = vec![(0u64, 0u64); k_count];
    let mut type2 = vec![(0u64, 0u64); k_count];
    let mut per_id: Vec<Vec<(u64, u64)>> = code
        .identities()
        .iter()
        .map(|&n_k| vec![(0u64, 0u64); n_k as usize])
        .collect();
    let mut acc_kt = vec![vec![R::zero(); m]; k_count];
    let mut trial_mean_sum = vec![R::zero(); k_count];
    let mut trial_mean_sumsq = vec![R::zero(); k_count];
    let mut cr = 0u64;
    let mut cdf = 0u64;
    for index in 0..plan.trials {
        let rec = simulate_trial(spec, code, &tables, plan, index)?;
        for k in 0..k_count {
            if plan.measure_type1 {
                type1[k].1 += 1;
                type1[k].0 += rec.type1_reject[k] as u64;
            }
            if plan.measure_type2 && !plan.per_pair {
                if let Some(accepted) = rec.type2_accept[k] {
                    type2[k].1 += 1;
                    type2[k].0 += accepted as u64;
                }
            }
            let mut sum = R::zero();
            for t in 0..m {
                let d = rec.step_distortion[k][t];
                acc_kt[k][t] += d;
                sum += d;
            }
            let mean = sum / m_r;
            trial_mean_sum[k] += mean;
            trial_mean_sumsq[k] += mean * mean;
        }
        if plan.measure_type2 && plan.per_pair {
            let table = rec.per_identity.as_ref().expect("per-pair record");
            for k in 0..k_count {
                for (j, entry) in table[k].iter().enumerate() {
                    if let Some(accepted) = entry {
                        per_id[k][j].1 += 1;
                        per_id[k][j].0 += *accepted as u64;
                    }
                }
            }
        }
        cr += rec.cr_failure as u64;
        cdf += rec.color_decode_failure as u64;
    }
    let z = R::from_f64_lossy(WILSON_Z);
    let senders = (0..k_count)
        .map(|k| {
            let mean = (0..m)
                .map(|t| acc_kt[k][t] / t_r)
                .fold(R::zero(), |a, b| a + b)
                / m_r;
            let trial_mean = trial_mean_sum[k] / t_r;
            let se = if plan.trials >= 2 {
                let var = (trial_mean_sumsq[k] - t_r * trial_mean * trial_mean)
                    / (t_r - R::one());
                let var = if var > R::zero() { var } else { R::zero() };
                (var / t_r).sqrt()
            } else {
                R::zero()
            };
            let (t2, by_id) = if plan.per_pair && plan.measure_type2 {
                let (s, n) = per_id[k]
                    .iter()
                    .fold((0u64, 0u64), |(s, n), &(a, b)| (s + a, n + b));
                (
                    Proportion::from_counts(s, n),
                    Some(
                        per_id[k]
                            .iter()
                            .map(|&(a, b)| Proportion::from_counts(a, b))
                            .collect(),
                    ),
                )
            } else {
                (Proportion::from_counts(type2[k].0, type2[k].1), None)
            };
            SenderStats {
                type1: Proportion::from_counts(type1[k].0, type1[k].1),
                type2: t2,
                distortion_mean: mean,
                distortion_se: se,
                distortion_lo: mean - z * se,
                distortion_hi: mean + z * se,
                type2_by_identity: by_id,
            }
        })
        .collect();
    Ok(ErrorStats {
        trials: plan.trials,
        cr_failure: Proportion::from_counts(cr, plan.trials),
        color_decode_failure: Proportion::from_counts(cdf, plan.trials),
        senders,
    })
}

/// Mean realized distortion per sender and time index, over the same trials
/// (and the same per-trial random streams) as [`run_trials`]. Averaging a
/// sender's trace over time reproduces its `distortion_mean`.
pub fn distortion_trace<R: Real>(
    spec: &SdMacSpec<R>,
    code: &IdfCode<R>,
    plan: &TrialPlan,
) -> Result<Vec<Vec<R>>> {
    validate_plan(code, plan)?;
    let tables = build_tables(spec, code)?;
    let k_count = code.num_senders();
    let m = code.m();
    let t_r = R::from_f64_lossy(plan.trials as f64);
    let mut acc_kt = vec![vec![R::zero(); m]; k_count];
    for index in 0..plan.trials {
        let rec = simulate_trial(spec, code, &tables, plan, index)?;
        for k in 0..k_count {
            for t in 0..m {
                acc_kt[k][t] += rec.step_distortion[k][t];
            }
        }
    }
    Ok(acc_kt
        .into_iter()
        .map(|row| row.into_iter().map(|v| v / t_r).collect())
        .collect())
}
