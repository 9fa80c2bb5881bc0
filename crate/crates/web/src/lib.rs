//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each exported function has a plain counterpart returning
//! `clockfcs::Result`, which is what the native tests exercise.

use clockfcs::fcs::{ClassicalFcs, FcsSolver};
use clockfcs::feedback::{build_joint, two_qubit_switching_policy};
use clockfcs::model::{qubit_clockwork, ClassicalClockworkSpec};
use clockfcs::{IntegratedCurrent, Result};
use wasm_bindgen::prelude::*;

fn snr_or_zero(r: &clockfcs::FcsResult) -> f64 {
    if r.degeneracy.is_some() {
        0.0
    } else {
        r.s
    }
}

fn grid(lo: f64, hi: f64, n: usize, periodic: bool) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let div = if periodic { n } else { n - 1 } as f64;
            (0..n).map(|k| lo + (hi - lo) * k as f64 / div).collect()
        }
    }
}

/// `[F, D, S]` of the qubit clockwork with `Γ = 1`.
pub fn qubit_point_native(energy: f64, phi: f64) -> Result<[f64; 3]> {
    let spec = qubit_clockwork(energy, phi, 1.0)?;
    let r = FcsSolver::new(&spec)?.evaluate(&IntegratedCurrent::total_count(spec.labels()))?;
    Ok([r.f, r.d, snr_or_zero(&r)])
}

/// Row-major `S(E, φ)` with `E` along rows and `φ ∈ [0, 2π)` along columns.
pub fn qubit_landscape_native(e_min: f64, e_max: f64, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows * cols);
    for e in grid(e_min, e_max, rows, false) {
        for phi in grid(0.0, std::f64::consts::TAU, cols, true) {
            out.push(qubit_point_native(e, phi).map(|v| v[2]).unwrap_or(0.0));
        }
    }
    Ok(out)
}

/// Total-count SNR of the switching policy at `(α₁, α₂)`.
pub fn feedback_point_native(alpha1: f64, alpha2: f64, energy: f64, phi: f64) -> Result<f64> {
    let (families, policy) = two_qubit_switching_policy(alpha1, alpha2, energy, phi, 1.0)?;
    let joint = build_joint(&families, &policy)?;
    let current = IntegratedCurrent::total_count(policy.alphabet().iter().copied());
    Ok(snr_or_zero(&FcsSolver::new(&joint.spec)?.evaluate(&current)?))
}

/// Row-major `S(α₁, α₂)` on `[lo, hi]²`, `α₁` along rows.
pub fn feedback_landscape_native(lo: f64, hi: f64, n: usize, energy: f64, phi: f64) -> Result<Vec<f64>> {
    let axis = grid(lo, hi, n, false);
    let mut out = Vec::with_capacity(n * n);
    for &a1 in &axis {
        for &a2 in &axis {
            out.push(feedback_point_native(a1, a2, energy, phi).unwrap_or(0.0));
        }
    }
    Ok(out)
}

/// `[F, D, S, A, 1/τ]` for a ring of rates with per-transition weights
/// (`weights[l]` counts the jump `l → l+1`). An empty `weights` uses the
/// hyperaccurate current.
pub fn ring_bounds_native(rates: &[f64], weights: &[f64]) -> Result<[f64; 5]> {
    let fcs = ClassicalFcs::new(&ClassicalClockworkSpec::ring(rates)?)?;
    let w = if weights.is_empty() { fcs.hyperaccurate_weights()? } else { weights.to_vec() };
    let r = fcs.evaluate(&w)?;
    Ok([r.f, r.d, snr_or_zero(&r), fcs.activity(), 1.0 / fcs.residual_time()?])
}

fn js(e: clockfcs::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn qubit_point(energy: f64, phi: f64) -> std::result::Result<Vec<f64>, JsError> {
    qubit_point_native(energy, phi).map(|v| v.to_vec()).map_err(js)
}

#[wasm_bindgen]
pub fn qubit_landscape(e_min: f64, e_max: f64, rows: usize, cols: usize) -> std::result::Result<Vec<f64>, JsError> {
    qubit_landscape_native(e_min, e_max, rows, cols).map_err(js)
}

#[wasm_bindgen]
pub fn feedback_point(alpha1: f64, alpha2: f64, energy: f64, phi: f64) -> std::result::Result<f64, JsError> {
    feedback_point_native(alpha1, alpha2, energy, phi).map_err(js)
}

#[wasm_bindgen]
pub fn feedback_landscape(lo: f64, hi: f64, n: usize, energy: f64, phi: f64) -> std::result::Result<Vec<f64>, JsError> {
    feedback_landscape_native(lo, hi, n, energy, phi).map_err(js)
}

#[wasm_bindgen]
pub fn ring_bounds(rates: Vec<f64>, weights: Vec<f64>) -> std::result::Result<Vec<f64>, JsError> {
    ring_bounds_native(&rates, &weights).map(|v| v.to_vec()).map_err(js)
}
