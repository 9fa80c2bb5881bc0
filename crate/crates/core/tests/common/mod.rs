#![allow(dead_code)]

use clockfcs::feedback::{ring_families, FeedbackPolicy};
use clockfcs::model::Coordinate;
use clockfcs::{ClassicalClockworkSpec, ControlledFamily, IntegratedCurrent, JumpLabel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Irreducible chain: a ring backbone with positive rates plus random extra
/// transitions.
pub fn random_chain(rng: &mut ChaCha8Rng, d: usize) -> ClassicalClockworkSpec {
    let mut rows = vec![vec![0.0; d]; d];
    for l in 0..d {
        rows[(l + 1) % d][l] = rng.random_range(0.1..5.0);
        for k in 0..d {
            if k != l && k != (l + 1) % d && rng.random_bool(0.5) {
                rows[k][l] = rng.random_range(0.1..5.0);
            }
        }
    }
    ClassicalClockworkSpec::from_rows(&rows).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Random policy over `g` two-state ring clockworks with rates in `[lo, hi]`.
pub fn random_ring_policy(rng: &mut ChaCha8Rng, g: usize, mdim: usize, lo: f64, hi: f64) -> FeedbackPolicy {
    let alphabet: Vec<JumpLabel> = (1..=g).flat_map(|a| (0..2).map(move |j| JumpLabel::new(a, j))).collect();
    let update: Vec<Vec<usize>> = (0..mdim)
        .map(|_| alphabet.iter().map(|_| rng.random_range(0..mdim)).collect())
        .collect();
    let params: Vec<Vec<Vec<f64>>> = (0..mdim)
        .map(|_| (0..g).map(|_| vec![rng.random_range(lo..=hi), rng.random_range(lo..=hi)]).collect())
        .collect();
    FeedbackPolicy::new(mdim, alphabet, update, params).unwrap()
}

pub fn two_state_families(g: usize, lo: f64, hi: f64) -> Vec<ControlledFamily> {
    ring_families(&vec![2; g], Coordinate::Interval { min: lo, max: hi }).unwrap()
}

/// Random weights on `(a, j)` labels, sometimes overridden per memory state.
pub fn random_feedback_current(rng: &mut ChaCha8Rng, policy: &FeedbackPolicy) -> IntegratedCurrent {
    let mut cur = IntegratedCurrent::new();
    for &l in policy.alphabet() {
        cur.set(l, rng.random_range(-2.0..2.0));
        for m in 0..policy.memory_states() {
            if rng.random_bool(0.3) {
                cur.set(l.with_memory(m), rng.random_range(-2.0..2.0));
            }
        }
    }
    cur
}
