//! Identification capacity-distortion lower bounds and sweep curves.
//!
//! Three bounds share one shape: maximize the entropy of the channel output
//! over input choices whose sensing distortions meet a per-sender budget.
//! The deterministic bound searches joint symbol tuples, the randomized
//! bound searches product input distributions, and the separation baseline
//! time-shares the unconstrained randomized achiever with the best sensing
//! tuple. Every returned rate is a single scalar valid for all senders
//! simultaneously: there is no rate trade-off between senders in these
//! bounds, only the shared output entropy.
//!
//! The product-distribution maximization is non-concave, so the optimizer
//! first runs an exhaustive coarse-grid search as a certified floor and then
//! refines by alternating per-sender best responses on a finer grid.
//! Admissibility of a candidate is evaluated self-consistently: the minimal
//! distortions are computed under the candidate product model itself.

use crate::channel::{AveragedChannel, SdMacSpec};
use crate::error::{Error, Result};
use crate::estimator::{distribution_distortion, optimal_estimator, InputModel};
use crate::fmt::sig9;
use crate::scalar::{entropy_bits, Real};

/// Which lower bound a [`RegionPoint`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    /// Best admissible joint symbol tuple.
    Deterministic,
    /// Best admissible product input distribution.
    Randomized,
    /// Time-sharing of sensing and unconstrained identification.
    Separation,
}

impl BoundKind {
    /// Token used in CSV output and CLI flags.
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Deterministic => "det",
            BoundKind::Randomized => "rand",
            BoundKind::Separation => "sep",
        }
    }
}

/// Input choice achieving a bound.
#[derive(Clone, Debug, PartialEq)]
pub enum Achiever<R> {
    /// Joint symbol tuple.
    Symbols(Vec<usize>),
    /// Product distribution, one vector per sender.
    Product(Vec<Vec<R>>),
}

impl<R: Real> Achiever<R> {
    /// Serialized form used in CSV rows: `x=(1;0)` or
    /// `P_1=[0.500000000;0.500000000];P_2=[...]`. Semicolons keep the field
    /// free of the CSV separator.
    pub fn serialize(&self) -> String {
        match self {
            Achiever::Symbols(x) => {
                let inner: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                format!("x=({})", inner.join(";"))
            }
            Achiever::Product(dists) => {
                let parts: Vec<String> = dists
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let inner: Vec<String> = p.iter().map(|&v| sig9(v)).collect();
                        format!("P_{}=[{}]", k + 1, inner.join(";"))
                    })
                    .collect();
                parts.join(";")
            }
        }
    }
}

/// One evaluated point of a bound curve.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPoint<R> {
    /// Bound this point belongs to.
    pub kind: BoundKind,
    /// Distortion budget the point was evaluated at.
    pub budget: Vec<R>,
    /// Whether any admissible input exists for this budget.
    pub feasible: bool,
    /// Rate lower bound in bits per channel use; `None` when infeasible.
    pub rate: Option<R>,
    /// Input achieving the rate; `None` when infeasible.
    pub achiever: Option<Achiever<R>>,
}

/// Optimizer configuration for [`randomized_bound`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptConfig<R> {
    /// Denominator of the coarse exhaustive grid (step `1/grid`).
    pub grid: u32,
    /// Denominator of the per-sender refinement grid (step `1/refine`).
    pub refine: u32,
    /// Convergence threshold for the alternating ascent, and the slack
    /// allowed when comparing a distortion against its budget.
    pub tol: R,
    /// Maximum number of alternating-ascent rounds (0 disables refinement).
    pub max_rounds: u32,
}

impl<R: Real> Default for OptConfig<R> {
    fn default() -> Self {
        OptConfig {
            grid: 64,
            refine: 1024,
            tol: R::budget_tol(),
            max_rounds: 100,
        }
    }
}

/// Desk-scale cap on enumerated grid candidates.
const MAX_GRID_CANDIDATES: u128 = 50_000_000;

/// Checks budget shape and nonnegativity.
///
/// A negative entry can never be met by nonnegative distortions, so it is
/// reported as `InfeasibleDistortion` up front.
pub fn check_budget<R: Real>(spec: &SdMacSpec<R>, budget: &[R]) -> Result<()> {
    if budget.len() != spec.num_senders() {
        return Err(Error::DimensionMismatch {
            what: "distortion budget".into(),
            expected: spec.num_senders(),
            got: budget.len(),
        });
    }
    if budget.iter().any(|&d| !(d >= R::zero())) {
        return Err(Error::InfeasibleDistortion {
            budget: budget_f64(budget),
        });
    }
    Ok(())
}

fn budget_f64<R: Real>(budget: &[R]) -> Vec<f64> {
    budget
        .iter()
        .map(|&d| d.to_f64().unwrap_or(f64::NAN))
        .collect()
}

/// Minimal distortions `d*_k` of every joint symbol tuple, indexed
/// `[x_flat][k]`, each evaluated under the point-mass model of that tuple.
pub fn symbol_tuple_distortions<R: Real>(spec: &SdMacSpec<R>) -> Result<Vec<Vec<R>>> {
    let x_space = spec.input_space();
    let mut out = Vec::with_capacity(x_space.len());
    for x in x_space.iter() {
        let model = InputModel::from_symbols(&x);
        let mut row = Vec::with_capacity(spec.num_senders());
        for k in 0..spec.num_senders() {
            let est = optimal_estimator(spec, &model, k)?;
            row.push(est.symbol_distortion(x[k]));
        }
        out.push(row);
    }
    Ok(out)
}

/// Flat indices of the joint symbol tuples meeting the budget within `tol`.
pub fn admissible_tuples<R: Real>(
    spec: &SdMacSpec<R>,
    budget: &[R],
    tol: R,
) -> Result<Vec<usize>> {
    check_budget(spec, budget)?;
    let tuple_d = symbol_tuple_distortions(spec)?;
    Ok((0..tuple_d.len())
        .filter(|&xf| {
            tuple_d[xf]
                .iter()
                .zip(budget)
                .all(|(&d, &cap)| d <= cap + tol)
        })
        .collect())
}

/// Budget met by every input: the per-sender maximum distortion entry.
pub fn unconstrained_budget<R: Real>(spec: &SdMacSpec<R>) -> Vec<R> {
    (0..spec.num_senders())
        .map(|k| spec.max_distortion(k))
        .collect()
}

/// Deterministic bound: the best output entropy among admissible joint
/// symbol tuples, ties resolved to the lexicographically smallest tuple.
pub fn deterministic_bound<R: Real>(spec: &SdMacSpec<R>, budget: &[R]) -> Result<RegionPoint<R>> {
    spec.validate()?;
    let admissible = admissible_tuples(spec, budget, R::budget_tol())?;
    if admissible.is_empty() {
        return Err(Error::InfeasibleDistortion {
            budget: budget_f64(budget),
        });
    }
    let avg = spec.average_channel();
    let x_space = spec.input_space();
    let mut best_rate = R::neg_infinity();
    let mut best_x = 0usize;
    for &xf in &admissible {
        let h = entropy_bits(avg.row(xf));
        if h > best_rate {
            best_rate = h;
            best_x = xf;
        }
    }
    Ok(RegionPoint {
        kind: BoundKind::Deterministic,
        budget: budget.to_vec(),
        feasible: true,
        rate: Some(best_rate),
        achiever: Some(Achiever::Symbols(x_space.unflatten(best_x))),
    })
}

/// Output distribution of a product input through the averaged channel.
pub(crate) fn product_output<R: Real>(avg: &AveragedChannel<R>, dists: &[Vec<R>]) -> Vec<R> {
    let x_space = avg.input_space();
    let y_size = avg.output_alphabet();
    let mut out = vec![R::zero(); y_size];
    let mut x = vec![0usize; dists.len()];
    for xf in 0..x_space.len() {
        x_space.unflatten_into(xf, &mut x);
        let mut w = R::one();
        for (k, &xk) in x.iter().enumerate() {
            w = w * dists[k][xk];
        }
        if w == R::zero() {
            continue;
        }
        for y in 0..y_size {
            out[y] += w * avg.prob(xf, y);
        }
    }
    out
}

/// Evaluates one product candidate: `Some(entropy)` when every sender's
/// distortion meets its budget within `tol`, `None` otherwise.
fn eval_product<R: Real>(
    spec: &SdMacSpec<R>,
    avg: &AveragedChannel<R>,
    budget: &[R],
    dists: &[Vec<R>],
    tol: R,
) -> Result<Option<R>> {
    let model = InputModel::from_distributions(dists.to_vec());
    for (k, &cap) in budget.iter().enumerate() {
        let d = distribution_distortion(spec, &model, k, &dists[k])?;
        if d > cap + tol {
            return Ok(None);
        }
    }
    Ok(Some(entropy_bits(&product_output(avg, dists))))
}

fn composition_count(total: u32, parts: usize) -> u128 {
    // C(total + parts - 1, parts - 1)
    let n = total as u128 + parts as u128 - 1;
    let k = parts as u128 - 1;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul(n - i) / (i + 1);
    }
    c
}

fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(total: u32, idx: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if idx == cur.len() - 1 {
            cur[idx] = total;
            out.push(cur.clone());
            return;
        }
        for v in 0..=total {
            cur[idx] = v;
            rec(total - v, idx + 1, cur, out);
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        return out;
    }
    let mut cur = vec![0u32; parts];
    rec(total, 0, &mut cur, &mut out);
    out
}

/// All distributions on `size` atoms with denominator `denom`, enumerated
/// lexicographically.
fn grid_distributions<R: Real>(denom: u32, size: usize) -> Vec<Vec<R>> {
    let scale = R::one() / R::from_u32(denom).unwrap();
    compositions(denom, size)
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|v| R::from_u32(v).unwrap() * scale)
                .collect()
        })
        .collect()
}

/// Randomized bound: maximize output entropy over admissible product input
/// distributions. An exhaustive coarse grid provides the floor; alternating
/// per-sender best responses on the refinement grid improve on it until a
/// full round gains less than `cfg.tol` or `cfg.max_rounds` is hit.
pub fn randomized_bound<R: Real>(
    spec: &SdMacSpec<R>,
    budget: &[R],
    cfg: &OptConfig<R>,
) -> Result<RegionPoint<R>> {
    spec.validate()?;
    check_budget(spec, budget)?;
    if cfg.grid == 0 || cfg.refine == 0 {
        return Err(Error::InvalidParameter(
            "grid denominators must be positive".into(),
        ));
    }
    let avg = spec.average_channel();
    let sizes = spec.input_alphabets();
    let num_senders = spec.num_senders();

    let mut coarse_count: u128 = 1;
    for &size in sizes {
        coarse_count = coarse_count.saturating_mul(composition_count(cfg.grid, size));
    }
    if coarse_count > MAX_GRID_CANDIDATES {
        return Err(Error::TooLarge {
            what: "coarse product grid".into(),
            size: coarse_count,
            limit: MAX_GRID_CANDIDATES,
        });
    }

    let per_sender: Vec<Vec<Vec<R>>> = sizes
        .iter()
        .map(|&size| grid_distributions(cfg.grid, size))
        .collect();

    // Exhaustive coarse search; strict improvement keeps the first
    // (lexicographically smallest) maximizer.
    let mut best_rate = R::neg_infinity();
    let mut best: Option<Vec<Vec<R>>> = None;
    let mut idx = vec![0usize; num_senders];
    loop {
        let cand: Vec<Vec<R>> = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| per_sender[k][i].clone())
            .collect();
        if let Some(h) = eval_product(spec, &avg, budget, &cand, cfg.tol)? {
            if h > best_rate {
                best_rate = h;
                best = Some(cand);
            }
        }
        // Odometer over per-sender grid indices, last sender fastest.
        let mut pos = num_senders;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < per_sender[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
        if pos == 0 && idx[0] == 0 {
            break;
        }
    }

    let mut current = match best {
        Some(c) => c,
        None => {
            return Err(Error::InfeasibleDistortion {
                budget: budget_f64(budget),
            })
        }
    };

    // Alternating per-sender best response on the refinement grid.
    for k in 0..num_senders {
        let count = composition_count(cfg.refine, sizes[k]);
        if count > MAX_GRID_CANDIDATES {
            return Err(Error::TooLarge {
                what: "refinement grid".into(),
                size: count,
                limit: MAX_GRID_CANDIDATES,
            });
        }
    }
    let refine: Vec<Vec<Vec<R>>> = sizes
        .iter()
        .map(|&size| grid_distributions(cfg.refine, size))
        .collect();
    let x_space = spec.input_space();
    let y_size = spec.output_alphabet();
    for _ in 0..cfg.max_rounds {
        let round_start = best_rate;
        for k in 0..num_senders {
            // The candidate's own admissibility and output entropy depend on
            // the other senders only through these precomputed tables.
            let model = InputModel::from_distributions(current.clone());
            let est = optimal_estimator(spec, &model, k)?;
            let dstar: Vec<R> = (0..sizes[k]).map(|x| est.symbol_distortion(x)).collect();
            let mut mix = vec![R::zero(); sizes[k] * y_size];
            let mut x = vec![0usize; num_senders];
            for xf in 0..x_space.len() {
                x_space.unflatten_into(xf, &mut x);
                let mut w = R::one();
                for (j, &xj) in x.iter().enumerate() {
                    if j != k {
                        w = w * current[j][xj];
                    }
                }
                if w == R::zero() {
                    continue;
                }
                for y in 0..y_size {
                    mix[x[k] * y_size + y] += w * avg.prob(xf, y);
                }
            }
            let mut adopted: Option<Vec<R>> = None;
            let mut out = vec![R::zero(); y_size];
            for q in &refine[k] {
                let mut own = R::zero();
                for (xk, &p) in q.iter().enumerate() {
                    own += p * dstar[xk];
                }
                if own > budget[k] + cfg.tol {
                    continue;
                }
                for y in 0..y_size {
                    let mut v = R::zero();
                    for (xk, &p) in q.iter().enumerate() {
                        if p > R::zero() {
                            v += p * mix[xk * y_size + y];
                        }
                    }
                    out[y] = v;
                }
                if entropy_bits(&out) <= best_rate {
                    continue;
                }
                // Changing sender k's distribution moves every sender's
                // minimal distortion, so re-check the full candidate before
                // adopting it.
                let mut cand = current.clone();
                cand[k] = q.clone();
                if let Some(h) = eval_product(spec, &avg, budget, &cand, cfg.tol)? {
                    if h > best_rate {
                        best_rate = h;
                        adopted = Some(q.clone());
                    }
                }
            }
            if let Some(q) = adopted {
                current[k] = q;
            }
        }
        if best_rate - round_start < cfg.tol {
            break;
        }
    }

    Ok(RegionPoint {
        kind: BoundKind::Randomized,
        budget: budget.to_vec(),
        feasible: true,
        rate: Some(best_rate),
        achiever: Some(Achiever::Product(current)),
    })
}

/// Separation baseline: run unconstrained identification for an `alpha`
/// fraction of the time and the best sensing tuple for the rest, with the
/// largest `alpha` whose time-shared distortion meets the budget.
pub fn separation_baseline<R: Real>(
    spec: &SdMacSpec<R>,
    budget: &[R],
    cfg: &OptConfig<R>,
) -> Result<RegionPoint<R>> {
    spec.validate()?;
    check_budget(spec, budget)?;
    let tuple_d = symbol_tuple_distortions(spec)?;
    let d_min: Vec<R> = (0..spec.num_senders())
        .map(|k| {
            tuple_d
                .iter()
                .map(|row| row[k])
                .fold(R::infinity(), |a, b| if b < a { b } else { a })
        })
        .collect();
    for (k, &cap) in budget.iter().enumerate() {
        if cap + cfg.tol < d_min[k] {
            return Err(Error::InfeasibleDistortion {
                budget: budget_f64(budget),
            });
        }
    }
    let unconstrained = randomized_bound(spec, &unconstrained_budget(spec), cfg)?;
    let r_id = unconstrained.rate.expect("unconstrained bound is feasible");
    let achiever = match unconstrained.achiever {
        Some(Achiever::Product(d)) => d,
        _ => unreachable!("randomized bound returns a product achiever"),
    };
    let model = InputModel::from_distributions(achiever.clone());
    let mut alpha = R::one();
    for k in 0..spec.num_senders() {
        let d_id = distribution_distortion(spec, &model, k, &achiever[k])?;
        let a = if d_id <= budget[k] + cfg.tol {
            R::one()
        } else {
            // alpha * d_id + (1 - alpha) * d_min <= D solved for alpha.
            let a = (budget[k] - d_min[k]) / (d_id - d_min[k]);
            a.max(R::zero()).min(R::one())
        };
        if a < alpha {
            alpha = a;
        }
    }
    Ok(RegionPoint {
        kind: BoundKind::Separation,
        budget: budget.to_vec(),
        feasible: true,
        rate: Some(alpha * r_id),
        achiever: Some(Achiever::Product(achiever)),
    })
}

/// Evaluates every (budget, kind) pair in grid order. Budgets that turn out
/// infeasible become rows with `feasible = false`; other errors propagate.
pub fn region_sweep<R: Real>(
    spec: &SdMacSpec<R>,
    budgets: &[Vec<R>],
    kinds: &[BoundKind],
    cfg: &OptConfig<R>,
) -> Result<Vec<RegionPoint<R>>> {
    let mut out = Vec::with_capacity(budgets.len() * kinds.len());
    for budget in budgets {
        for &kind in kinds {
            let result = match kind {
                BoundKind::Deterministic => deterministic_bound(spec, budget),
                BoundKind::Randomized => randomized_bound(spec, budget, cfg),
                BoundKind::Separation => separation_baseline(spec, budget, cfg),
            };
            match result {
                Ok(point) => out.push(point),
                Err(Error::InfeasibleDistortion { .. }) => out.push(RegionPoint {
                    kind,
                    budget: budget.clone(),
                    feasible: false,
                    rate: None,
                    achiever: None,
                }),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Renders sweep points as CSV with columns
/// `kind,D_1,..,D_K,feasible,rate,achiever`.
///
/// The leading `#` metadata line records the two caveats attached to these
/// curves: the separation rows are a reconstructed time-sharing baseline,
/// and all bounds presuppose (without checking) that every sender can
/// transmit at a positive rate.
pub fn region_csv<R: Real>(points: &[RegionPoint<R>], num_senders: usize) -> String {
    let mut out = String::from(
        "# separation rows are a reconstructed time-sharing baseline; \
         all bounds assume every sender transmits at a positive rate (not verified)\n",
    );
    out.push_str("kind");
    for k in 1..=num_senders {
        out.push_str(&format!(",D_{k}"));
    }
    out.push_str(",feasible,rate,achiever\n");
    for p in points {
        out.push_str(p.kind.as_str());
        for &d in &p.budget {
            out.push(',');
            out.push_str(&sig9(d));
        }
        out.push(',');
        out.push_str(if p.feasible { "true" } else { "false" });
        out.push(',');
        if let Some(r) = p.rate {
            out.push_str(&sig9(r));
        }
        out.push(',');
        if let Some(a) = &p.achiever {
            out.push_str(&a.serialize());
        }
        out.push('\n');
    }
    out
}
