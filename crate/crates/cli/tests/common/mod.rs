//! Reference computations written directly from the model definitions, in
//! plain probability space and without the library's caches.

#![allow(dead_code)]

use crowdteach::Problem;

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn score(p: &Problem, h: usize, x: &[f64]) -> f64 {
    let hyp = &p.hypotheses()[h];
    hyp.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + hyp.offset
}

/// `err(h, h*)` over the teaching set.
pub fn err(p: &Problem, h: usize) -> f64 {
    let t = p.target_index();
    let n = p.n_examples();
    (0..n)
        .filter(|&i| {
            let x = &p.example(i).features;
            sign(score(p, h, x)) != sign(score(p, t, x))
        })
        .count() as f64
        / n as f64
}

/// `Q(h | A)`.
pub fn q(p: &Problem, alpha: f64, h: usize, set: &[usize]) -> f64 {
    let mut v = p.prior()[h];
    for &i in set {
        let x = p.example(i);
        let s = score(p, h, &x.features);
        let y = x.label.value() as f64;
        if sign(s) != y {
            v *= 1.0 / (1.0 + (-alpha * s * y).exp());
        }
    }
    v
}

pub fn f(p: &Problem, alpha: f64, set: &[usize]) -> f64 {
    (0..p.n_hypotheses())
        .map(|h| (p.prior()[h] - q(p, alpha, h, set)) * err(p, h))
        .sum()
}

pub fn prior_error(p: &Problem) -> f64 {
    (0..p.n_hypotheses())
        .map(|h| p.prior()[h] * err(p, h))
        .sum()
}

pub fn posterior(p: &Problem, alpha: f64, set: &[usize]) -> Vec<f64> {
    let w: Vec<f64> = (0..p.n_hypotheses()).map(|h| q(p, alpha, h, set)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

pub fn expected_error(p: &Problem, alpha: f64, set: &[usize]) -> f64 {
    posterior(p, alpha, set)
        .iter()
        .enumerate()
        .map(|(h, v)| v * err(p, h))
        .sum()
}

fn entropy2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }
}

/// Entropy of the posterior-predicted label of example `x` after `set`.
pub fn label_entropy(p: &Problem, alpha: f64, set: &[usize], x: usize) -> f64 {
    let post = posterior(p, alpha, set);
    let feats = &p.example(x).features;
    let positive: f64 = (0..p.n_hypotheses())
        .filter(|&h| score(p, h, feats) >= 0.0)
        .map(|h| post[h])
        .sum();
    entropy2(positive)
}

/// Posterior average of the entropy of each hypothesis' own label
/// likelihood on `x`.
pub fn hypothesis_entropy(p: &Problem, alpha: f64, set: &[usize], x: usize) -> f64 {
    let post = posterior(p, alpha, set);
    let feats = &p.example(x).features;
    (0..p.n_hypotheses())
        .map(|h| post[h] * entropy2(1.0 / (1.0 + (-alpha * score(p, h, feats)).exp())))
        .sum()
}

/// Members of a bitmask over `n` items.
pub fn members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

/// Mean and standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn report(criterion: u32, pass: bool, detail: impl AsRef<str>) {
    println!(
        "criterion {criterion:>2}: {} | {}",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
}
