//! Independent oracles for the evaluation suite: exhaustive distortion sums
//! over raw index tuples, random channel generation, hand-derived closed
//! forms for the adder channel on a fine product grid, and a capacity
//! iteration used in failure diagnostics. Nothing here reuses the library's
//! estimator, region, or entropy code paths.

use idsense_core::channel::SdMacSpec;
use idsense_core::estimator::{InputModel, SenderInput};
use rand::Rng;

/// Calls `f` with every tuple of the mixed-radix space, first coordinate
/// most significant.
pub fn for_each_tuple(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.iter().any(|&s| s == 0) {
        return;
    }
    let mut t = vec![0usize; sizes.len()];
    'outer: loop {
        f(&t);
        for i in (0..sizes.len()).rev() {
            t[i] += 1;
            if t[i] < sizes[i] {
                continue 'outer;
            }
            t[i] = 0;
        }
        return;
    }
}

/// Mixed-radix flat index, first coordinate most significant.
pub fn flat_index(sizes: &[usize], tuple: &[usize]) -> usize {
    tuple.iter().zip(sizes).fold(0, |acc, (&t, &s)| acc * s + t)
}

/// Random point on the probability simplex via normalized exponentials.
pub fn simplex<G: Rng>(rng: &mut G, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -rng.random::<f64>().max(1e-12).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Random small channel: 1 to 3 senders, alphabets of size 1 to 4 (output
/// at least 2), exponential-normalized kernel rows and state distribution,
/// uniform distortion entries in [0, 1].
pub fn random_spec<G: Rng>(rng: &mut G) -> SdMacSpec<f64> {
    let k = rng.random_range(1..=3usize);
    let xs: Vec<usize> = (0..k).map(|_| rng.random_range(1..=4usize)).collect();
    let ss: Vec<usize> = (0..k).map(|_| rng.random_range(1..=4usize)).collect();
    let y = rng.random_range(2..=4usize);
    let x_total: usize = xs.iter().product();
    let s_total: usize = ss.iter().product();
    let mut kernel = Vec::with_capacity(x_total * s_total * y);
    for _ in 0..x_total * s_total {
        kernel.extend(simplex(rng, y));
    }
    let state_dist = simplex(rng, s_total);
    let distortions = ss
        .iter()
        .map(|&sz| (0..sz * sz).map(|_| rng.random::<f64>()).collect())
        .collect();
    SdMacSpec::new(xs, ss, y, kernel, state_dist, distortions).expect("random spec is valid")
}

/// Random input model: each sender is a fixed symbol or a random
/// distribution with equal probability.
pub fn random_model<G: Rng>(rng: &mut G, spec: &SdMacSpec<f64>) -> InputModel<f64> {
    InputModel::new(
        spec.input_alphabets()
            .iter()
            .map(|&sz| {
                if rng.random::<f64>() < 0.5 {
                    SenderInput::Symbol(rng.random_range(0..sz))
                } else {
                    SenderInput::Distribution(simplex(rng, sz))
                }
            })
            .collect(),
    )
}

fn best_estimate_sum(
    spec: &SdMacSpec<f64>,
    k: usize,
    sk_sz: usize,
    cells: usize,
    weight: &[f64],
) -> f64 {
    let mut total = 0.0;
    for cell in 0..cells {
        let mut best = f64::INFINITY;
        for s_hat in 0..sk_sz {
            let sum: f64 = (0..sk_sz)
                .map(|s| weight[cell * sk_sz + s] * spec.distortion_entry(k, s, s_hat))
                .sum();
            if sum < best {
                best = sum;
            }
        }
        total += best;
    }
    total
}

/// Exhaustive minimal distortion of sender `k` transmitting `x_k` while the
/// others follow `model`: every `(inputs, states, output)` combination is
/// enumerated, its weight accumulated into an `(output, state)` cell, and
/// the best estimate picked per output.
pub fn brute_symbol_distortion(
    spec: &SdMacSpec<f64>,
    model: &InputModel<f64>,
    k: usize,
    x_k: usize,
) -> f64 {
    let xs = spec.input_alphabets().to_vec();
    let ss = spec.state_alphabets().to_vec();
    let y_sz = spec.output_alphabet();
    let sk_sz = ss[k];
    let mut weight = vec![0.0f64; y_sz * sk_sz];
    for_each_tuple(&xs, |x| {
        if x[k] != x_k {
            return;
        }
        let mut px = 1.0;
        for (j, &xj) in x.iter().enumerate() {
            if j != k {
                px *= model.prob(j, xj);
            }
        }
        if px == 0.0 {
            return;
        }
        for_each_tuple(&ss, |s| {
            let ps = spec.state_prob(flat_index(&ss, s));
            if ps == 0.0 {
                return;
            }
            for y in 0..y_sz {
                weight[y * sk_sz + s[k]] += px * ps * spec.kernel_prob_at(x, s, y);
            }
        });
    });
    best_estimate_sum(spec, k, sk_sz, y_sz, &weight)
}

/// Exhaustive minimal distortion of sender `k` drawing from `p_k`: like the
/// symbol oracle but with `(own symbol, output)` cells, so the estimator's
/// knowledge of the transmitted symbol is modeled directly rather than by
/// averaging per-symbol results.
pub fn brute_distribution_distortion(
    spec: &SdMacSpec<f64>,
    model: &InputModel<f64>,
    k: usize,
    p_k: &[f64],
) -> f64 {
    let xs = spec.input_alphabets().to_vec();
    let ss = spec.state_alphabets().to_vec();
    let y_sz = spec.output_alphabet();
    let sk_sz = ss[k];
    let mut weight = vec![0.0f64; xs[k] * y_sz * sk_sz];
    for_each_tuple(&xs, |x| {
        let mut px = p_k[x[k]];
        for (j, &xj) in x.iter().enumerate() {
            if j != k {
                px *= model.prob(j, xj);
            }
        }
        if px == 0.0 {
            return;
        }
        for_each_tuple(&ss, |s| {
            let ps = spec.state_prob(flat_index(&ss, s));
            if ps == 0.0 {
                return;
            }
            for y in 0..y_sz {
                weight[(x[k] * y_sz + y) * sk_sz + s[k]] += px * ps * spec.kernel_prob_at(x, s, y);
            }
        });
    });
    best_estimate_sum(spec, k, sk_sz, xs[k] * y_sz, &weight)
}

/// Binary entropy in bits, independent of the library's helpers.
pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Closed-form product-grid oracle for the adder channel at state
/// parameter 0.2. With on-probabilities `(a, b)` the hand-derived forms are
/// `P(Y=1) = 0.2(a + b - 2ab) + 0.32ab` and minimal distortions
/// `0.2(1 - a(1-b))` and `0.2(1 - b(1-a))`. Returns the maximal output
/// entropy over the `(g+1) x (g+1)` grid subject to the shared budget, or
/// `None` when no grid point is feasible.
pub fn adder_grid_oracle(budget: f64, g: u32) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..=g {
        let a = f64::from(i) / f64::from(g);
        for j in 0..=g {
            let b = f64::from(j) / f64::from(g);
            let d1 = 0.2 * (1.0 - a * (1.0 - b));
            let d2 = 0.2 * (1.0 - b * (1.0 - a));
            if d1 <= budget + 1e-12 && d2 <= budget + 1e-12 {
                let p1 = 0.2 * (a + b - 2.0 * a * b) + 0.32 * a * b;
                let rate = h2(p1);
                if best.is_none_or(|cur| rate > cur) {
                    best = Some(rate);
                }
            }
        }
    }
    best
}

/// Standard capacity iteration for a small row-stochastic channel, in bits.
/// Used only to diagnose why a requested color code cannot exist.
pub fn channel_capacity_bits(rows: &[Vec<f64>], iters: usize) -> f64 {
    let n = rows.len();
    let m = rows[0].len();
    let mut p = vec![1.0 / n as f64; n];
    let mut info = 0.0;
    for _ in 0..iters {
        let mut q = vec![0.0f64; m];
        for (x, row) in rows.iter().enumerate() {
            for (y, &w) in row.iter().enumerate() {
                q[y] += p[x] * w;
            }
        }
        let div: Vec<f64> = rows
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&q)
                    .filter(|(&w, _)| w > 0.0)
                    .map(|(&w, &qy)| w * (w / qy).ln())
                    .sum::<f64>()
            })
            .collect();
        info = p
            .iter()
            .zip(&div)
            .map(|(&px, &dx)| px * dx)
            .sum::<f64>()
            / std::f64::consts::LN_2;
        let scaled: Vec<f64> = p.iter().zip(&div).map(|(&px, &dx)| px * dx.exp()).collect();
        let total: f64 = scaled.iter().sum();
        p = scaled.into_iter().map(|v| v / total).collect();
    }
    info
}
