//! Categorical distributions over logits.

use rand::Rng;

pub fn logsumexp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp(logits);
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn log_prob(logits: &[f64], action: usize) -> f64 {
    logits[action] - logsumexp(logits)
}

pub fn entropy(logits: &[f64]) -> f64 {
    log_softmax(logits).iter().map(|l| -l.exp() * l).sum()
}

/// Inverse-CDF draw.
pub fn sample<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let p = softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave the total a hair below 1.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Highest-probability category, ties to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    best
}
