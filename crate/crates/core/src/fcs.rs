//! Asymptotic counting statistics of weighted jump currents.
//!
//! For a unique steady state `ρ` of the vectorized generator `L̂` the current
//! `N(t) = Σ_j w_j N_j(t)` has
//!
//! * `F = ⟨⟨1|W|ρ⟩⟩`,
//! * `D = ⟨⟨1|W₂|ρ⟩⟩ - 2⟨⟨1|W L̂⁺ W|ρ⟩⟩`,
//!
//! with `W = Σ_j w_j J_j*⊗J_j`, `W₂` its `w²` analogue and `L̂⁺` the group
//! inverse. Everything is evaluated through matrix products on the Hilbert
//! space rather than by forming `W`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::FeedbackPolicy;
use crate::linalg::{self, re, ComplexMatrix, ComplexVector, Svd, VectorizedOperator, C64};
use crate::model::{ClassicalClockworkSpec, ControlKind, ControlledFamily, JumpLabel, LindbladSpec};

/// Relative singular-value cutoff separating the kernel of `L̂`.
pub const KERNEL_CUTOFF: f64 = 1e-12;
const IMAG_TOL: f64 = 1e-10;
const NEG_EIGEN_TOL: f64 = 1e-8;

/// Weighted count `N(t) = Σ w_j N_j(t)`.
///
/// A weight keyed by `(a, j)` applies to the jump `(a, j)` in every memory
/// state; a weight keyed by `(a, j, m)` applies only before-memory `m` and
/// takes precedence. Unlisted labels have weight zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<WeightEntry>", into = "Vec<WeightEntry>")]
pub struct IntegratedCurrent {
    weights: BTreeMap<JumpLabel, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightEntry {
    pub label: JumpLabel,
    pub w: f64,
}

impl From<Vec<WeightEntry>> for IntegratedCurrent {
    fn from(entries: Vec<WeightEntry>) -> Self {
        Self { weights: entries.into_iter().map(|e| (e.label, e.w)).collect() }
    }
}

impl From<IntegratedCurrent> for Vec<WeightEntry> {
    fn from(c: IntegratedCurrent) -> Self {
        c.weights.into_iter().map(|(label, w)| WeightEntry { label, w }).collect()
    }
}

impl IntegratedCurrent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, label: JumpLabel, w: f64) -> Self {
        self.weights.insert(label, w);
        self
    }

    pub fn set(&mut self, label: JumpLabel, w: f64) {
        self.weights.insert(label, w);
    }

    /// Weight one on every `(a, j)` among `labels`.
    pub fn total_count(labels: impl IntoIterator<Item = JumpLabel>) -> Self {
        Self { weights: labels.into_iter().map(|l| (l.base(), 1.0)).collect() }
    }

    pub fn entries(&self) -> impl Iterator<Item = (JumpLabel, f64)> + '_ {
        self.weights.iter().map(|(l, w)| (*l, *w))
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Effective weight of a concrete jump.
    pub fn weight_for(&self, label: JumpLabel) -> f64 {
        if let Some(w) = self.weights.get(&label) {
            return *w;
        }
        if label.memory.is_some() {
            if let Some(w) = self.weights.get(&label.base()) {
                return *w;
            }
        }
        0.0
    }

    /// `w → w/α`.
    pub fn rescale_weights(&self, alpha: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("weight rescaling factor {alpha} must be finite and non-zero")));
        }
        Ok(Self { weights: self.weights.iter().map(|(l, w)| (*l, w / alpha)).collect() })
    }

    /// Every weighted label must name at least one jump of `labels`.
    pub fn validate(&self, labels: &[JumpLabel]) -> Result<()> {
        for (key, w) in &self.weights {
            if !w.is_finite() {
                return Err(Error::InvalidParameter(format!("weight for {key} is not finite")));
            }
            let found = labels
                .iter()
                .any(|l| l == key || (key.memory.is_none() && l.base() == *key));
            if !found {
                return Err(Error::UnknownLabel(key.to_string()));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, labels: &[JumpLabel]) -> Result<Vec<f64>> {
        self.validate(labels)?;
        Ok(labels.iter().map(|l| self.weight_for(*l)).collect())
    }
}

/// Why `S` is not the plain ratio `F²/D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// No weighted jump ever fires; `S` is reported as zero.
    NullCurrent,
    /// Vanishing noise with a non-zero current; `S` is infinite.
    ZeroNoise,
}

impl Degeneracy {
    pub fn as_str(self) -> &'static str {
        match self {
            Degeneracy::NullCurrent => "null_current",
            Degeneracy::ZeroNoise => "zero_noise",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcsResult {
    pub f: f64,
    pub d: f64,
    pub s: f64,
    /// `S/F`; zero when `F = 0`.
    pub accuracy: f64,
    /// Total jump rate `Σ_j tr(J_j ρ J_j†)`.
    pub dynamical_activity: f64,
    /// `Σ_l p_l/Γ_l`, only for classical chains.
    pub residual_time: Option<f64>,
    pub steady_state: ComplexMatrix,
    pub degeneracy: Option<Degeneracy>,
}

fn finish(f: f64, d: f64, d1: f64) -> Result<(f64, f64, f64, Option<Degeneracy>)> {
    if d1 <= f64::MIN_POSITIVE {
        return Ok((0.0, 0.0, 0.0, Some(Degeneracy::NullCurrent)));
    }
    if d < -NEG_EIGEN_TOL * d1 {
        return Err(Error::NonPositive { value: d });
    }
    if d <= 1e-14 * d1 {
        if f.abs() <= 1e-12 * d1.sqrt() {
            return Ok((f, d, 0.0, Some(Degeneracy::NullCurrent)));
        }
        return Ok((f, d, f64::INFINITY, Some(Degeneracy::ZeroNoise)));
    }
    Ok((f, d, f * f / d, None))
}

fn real_part(z: C64, quantity: &'static str) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * z.re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue { quantity, value: z.im });
    }
    Ok(z.re)
}

/// `L̂ = -i(1⊗H - Hᵀ⊗1) + Σ_j (J*⊗J - ½ 1⊗J†J - ½ (J†J)ᵀ⊗1)` in
/// column-stacking convention.
pub fn vectorized_generator(spec: &LindbladSpec) -> ComplexMatrix {
    let n = spec.dim();
    let id = ComplexMatrix::identity(n, n);
    let kron = |a: &ComplexMatrix, b: &ComplexMatrix| linalg::kron(a, b).expect("dimension fits in memory");
    let h = spec.hamiltonian();
    let mut l = (kron(&id, h) - kron(&h.transpose(), &id)) * C64::new(0.0, -1.0);
    let mut jdj_sum = ComplexMatrix::zeros(n, n);
    for jump in spec.jumps() {
        let j = &jump.op;
        l += kron(&j.map(|z| z.conj()), j);
        jdj_sum += j.adjoint() * j;
    }
    l -= (kron(&id, &jdj_sum) + kron(&jdj_sum.transpose(), &id)) * re(0.5);
    l
}

/// Cached steady state and SVD of one generator; evaluates many currents.
#[derive(Clone, Debug)]
pub struct FcsSolver {
    dim: usize,
    labels: Vec<JumpLabel>,
    ops: Vec<ComplexMatrix>,
    generator: ComplexMatrix,
    svd: Svd,
    rho: ComplexMatrix,
    rho_vec: ComplexVector,
    classical: Option<Vec<(usize, usize, f64)>>,
}

impl FcsSolver {
    pub fn new(spec: &LindbladSpec) -> Result<Self> {
        let n = spec.dim();
        let generator = vectorized_generator(spec);
        let svd = Svd::compute(&generator)?;
        let kernel = svd.null_space(KERNEL_CUTOFF);
        if kernel.len() != 1 {
            return Err(Error::KernelDimension { dim: kernel.len() });
        }
        let v = VectorizedOperator::new(kernel[0].clone())?;
        let raw = linalg::unvectorize(&v);
        let tr = raw.trace();
        if tr.norm() <= 1e-300 {
            return Err(Error::KernelDimension { dim: 0 });
        }
        let scaled = raw / tr;
        let rho = (&scaled + scaled.adjoint()) * re(0.5);
        let eig = rho.clone().symmetric_eigen();
        if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
            if min < -NEG_EIGEN_TOL {
                return Err(Error::NonPositive { value: min });
            }
        }
        let rho_vec = linalg::vectorize(&rho)?.into_data();
        Ok(Self {
            dim: n,
            labels: spec.labels().collect(),
            ops: spec.jumps().iter().map(|j| j.op.clone()).collect(),
            generator,
            svd,
            rho,
            rho_vec,
            classical: classical_transitions(spec),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[JumpLabel] {
        &self.labels
    }

    pub fn generator(&self) -> &ComplexMatrix {
        &self.generator
    }

    pub fn steady_state(&self) -> &ComplexMatrix {
        &self.rho
    }

    /// `‖L̂|ρ⟩⟩‖ / ‖L̂‖`.
    pub fn steady_state_residual(&self) -> f64 {
        (&self.generator * &self.rho_vec).norm() / self.generator.norm().max(f64::MIN_POSITIVE)
    }

    fn project(&self, v: &ComplexVector) -> ComplexVector {
        // (1 - |ρ⟩⟩⟨⟨1|) v
        let n = self.dim;
        let tr: C64 = (0..n).map(|i| v[i * n + i]).sum();
        v - &self.rho_vec * tr
    }

    /// `L̂⁺ v`.
    pub fn apply_group_inverse(&self, v: &ComplexVector) -> ComplexVector {
        let pv = self.project(v);
        let y = self.svd.apply_pseudo_inverse(&pv, KERNEL_CUTOFF);
        self.project(&y)
    }

    /// `L̂⁺ = P L̂^MP P` with `P = 1 - |ρ⟩⟩⟨⟨1|`.
    pub fn group_inverse(&self) -> ComplexMatrix {
        let n2 = self.dim * self.dim;
        let p = ComplexMatrix::identity(n2, n2) - &self.rho_vec * linalg::identity_vector(self.dim).transpose();
        &p * self.svd.pseudo_inverse(KERNEL_CUTOFF) * &p
    }

    /// Relative residuals of `LL⁺L = L`, `L⁺LL⁺ = L⁺` and `L⁺L = LL⁺`.
    pub fn group_inverse_residuals(&self) -> [f64; 3] {
        let l = &self.generator;
        let g = self.group_inverse();
        let lg = l * &g;
        let gl = &g * l;
        let ln = l.norm().max(f64::MIN_POSITIVE);
        let gn = g.norm().max(f64::MIN_POSITIVE);
        [
            (&lg * l - l).norm() / ln,
            (&gl * &g - &g).norm() / gn,
            (&gl - &lg).norm() / gl.norm().max(1.0),
        ]
    }

    /// `Σ_k c_k J_k X J_k†`.
    fn weighted_jump_map(&self, weights: &[f64], x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for (op, &w) in self.ops.iter().zip(weights) {
            if w != 0.0 {
                out += op * x * op.adjoint() * re(w);
            }
        }
        out
    }

    pub fn evaluate(&self, current: &IntegratedCurrent) -> Result<FcsResult> {
        let weights = current.resolve(&self.labels)?;
        self.evaluate_weights(&weights)
    }

    /// Evaluates per-jump weights given in label order.
    pub fn evaluate_weights(&self, weights: &[f64]) -> Result<FcsResult> {
        if weights.len() != self.ops.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} jumps",
                weights.len(),
                self.ops.len()
            )));
        }
        let sigma = self.weighted_jump_map(weights, &self.rho);
        let f = real_part(sigma.trace(), "F")?;
        let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
        let d1 = real_part(self.weighted_jump_map(&sq, &self.rho).trace(), "D")?;
        let y = self.apply_group_inverse(&linalg::vectorize(&sigma)?.into_data());
        let y = linalg::unvectorize(&VectorizedOperator::new(y)?);
        let d2 = real_part(self.weighted_jump_map(weights, &y).trace(), "D")?;
        let (f, d, s, degeneracy) = finish(f, d1 - 2.0 * d2, d1)?;
        let activity: f64 = self
            .ops
            .iter()
            .map(|op| (op * &self.rho * op.adjoint()).trace().re)
            .sum();
        Ok(FcsResult {
            f,
            d,
            s,
            accuracy: if f != 0.0 && s.is_finite() { s / f } else { 0.0 },
            dynamical_activity: activity,
            residual_time: self.classical.as_ref().and_then(|t| residual_time_from(self.dim, t, &self.populations())),
            steady_state: self.rho.clone(),
            degeneracy,
        })
    }

    fn populations(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.rho[(i, i)].re).collect()
    }
}

pub fn steady_state(spec: &LindbladSpec) -> Result<ComplexMatrix> {
    Ok(FcsSolver::new(spec)?.rho)
}

/// Group inverse for a given steady state.
pub fn group_inverse(spec: &LindbladSpec, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = spec.dim();
    if rho.nrows() != n || rho.ncols() != n {
        return Err(Error::DimensionMismatch("steady state dimension differs from spec".into()));
    }
    let l = vectorized_generator(spec);
    let svd = Svd::compute(&l)?;
    let kernel = svd.null_space(KERNEL_CUTOFF).len();
    if kernel != 1 {
        return Err(Error::KernelDimension { dim: kernel });
    }
    let r = linalg::vectorize(rho)?.into_data();
    let n2 = n * n;
    let p = ComplexMatrix::identity(n2, n2) - &r * linalg::identity_vector(n).transpose();
    Ok(&p * svd.pseudo_inverse(KERNEL_CUTOFF) * &p)
}

pub fn current_and_noise(spec: &LindbladSpec, current: &IntegratedCurrent) -> Result<FcsResult> {
    FcsSolver::new(spec)?.evaluate(current)
}

/// Transitions `(from, to, rate)` when the spec is a classical chain: diagonal
/// Hamiltonian and every jump a single off-diagonal matrix element (or zero).
pub fn classical_transitions(spec: &LindbladSpec) -> Option<Vec<(usize, usize, f64)>> {
    let n = spec.dim();
    let h = spec.hamiltonian();
    for r in 0..n {
        for c in 0..n {
            if r != c && h[(r, c)].norm() != 0.0 {
                return None;
            }
        }
    }
    let mut out = Vec::with_capacity(spec.jumps().len());
    for jump in spec.jumps() {
        let mut entry = None;
        for c in 0..n {
            for r in 0..n {
                let z = jump.op[(r, c)];
                if z.norm() != 0.0 {
                    if entry.is_some() || r == c {
                        return None;
                    }
                    entry = Some((c, r, z.norm_sqr()));
                }
            }
        }
        out.push(entry.unwrap_or((0, 0, 0.0)));
    }
    Some(out)
}

fn escape_rates(n: usize, transitions: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut g = vec![0.0; n];
    for &(from, _, rate) in transitions {
        g[from] += rate;
    }
    g
}

fn residual_time_from(n: usize, transitions: &[(usize, usize, f64)], p: &[f64]) -> Option<f64> {
    let g = escape_rates(n, transitions);
    let mut tau = 0.0;
    for l in 0..n {
        if g[l] <= 0.0 {
            return None;
        }
        tau += p[l] / g[l];
    }
    Some(tau)
}

fn require_classical(spec: &LindbladSpec) -> Result<Vec<(usize, usize, f64)>> {
    classical_transitions(spec)
        .ok_or_else(|| Error::NotClassical("spec has coherent dynamics or non-elementary jumps".into()))
}

/// Merge parallel jumps of a classical spec into a rate matrix.
pub fn classical_rates(spec: &LindbladSpec) -> Result<ClassicalClockworkSpec> {
    let t = require_classical(spec)?;
    let n = spec.dim();
    let mut r = DMatrix::zeros(n, n);
    for (from, to, rate) in t {
        if from != to {
            r[(to, from)] += rate;
        }
    }
    ClassicalClockworkSpec::new(r)
}

fn check_escape(g: &[f64]) -> Result<()> {
    match g.iter().position(|x| *x <= 0.0) {
        Some(state) => Err(Error::ZeroEscapeRate { state }),
        None => Ok(()),
    }
}

/// Dynamical activity `A = Σ_l Γ_l p_l`; bounds `S ≤ A` for every current.
pub fn kur_bound(spec: &LindbladSpec) -> Result<f64> {
    let chain = ClassicalFcs::new(&classical_rates(spec)?)?;
    Ok(chain.activity())
}

/// Mean residual time `τ = Σ_l p_l/Γ_l`; bounds `S ≤ 1/τ` for every current.
pub fn cur_bound(spec: &LindbladSpec) -> Result<f64> {
    let chain = ClassicalFcs::new(&classical_rates(spec)?)?;
    chain.residual_time()
}

/// Weight `1/Γ_l` on every jump leaving state `l`.
pub fn hyperaccurate_current(spec: &LindbladSpec) -> Result<IntegratedCurrent> {
    let t = require_classical(spec)?;
    let g = escape_rates(spec.dim(), &t);
    check_escape(&g)?;
    let mut current = IntegratedCurrent::new();
    for (jump, &(from, _, rate)) in spec.jumps().iter().zip(&t) {
        if rate > 0.0 {
            current.set(jump.label, 1.0 / g[from]);
        }
    }
    Ok(current)
}

/// Population-sector counting statistics of a classical chain. Scales to
/// chains whose vectorized generator would be too large to decompose.
#[derive(Clone, Debug)]
pub struct ClassicalFcs {
    n: usize,
    transitions: Vec<(usize, usize, f64)>,
    escape: Vec<f64>,
    p: DVector<f64>,
    generator: DMatrix<f64>,
    u: DMatrix<f64>,
    singular_values: Vec<f64>,
    v_t: DMatrix<f64>,
}

impl ClassicalFcs {
    pub fn new(spec: &ClassicalClockworkSpec) -> Result<Self> {
        let n = spec.num_states();
        let generator = spec.generator();
        let (u, singular_values, v_t) = linalg::jacobi_svd(&generator)?;
        let smax = singular_values.iter().copied().fold(0.0, f64::max);
        let kernel: Vec<usize> = (0..n).filter(|&k| singular_values[k] <= KERNEL_CUTOFF * smax).collect();
        if kernel.len() != 1 {
            return Err(Error::KernelDimension { dim: kernel.len() });
        }
        let raw: DVector<f64> = v_t.row(kernel[0]).transpose();
        let p = &raw / raw.sum();
        if let Some(min) = p.iter().copied().reduce(f64::min) {
            if min < -NEG_EIGEN_TOL {
                return Err(Error::NonPositive { value: min });
            }
        }
        Ok(Self {
            n,
            transitions: spec.transitions(),
            escape: spec.escape_rates(),
            p,
            generator,
            u,
            singular_values,
            v_t,
        })
    }

    pub fn num_states(&self) -> usize {
        self.n
    }

    pub fn transitions(&self) -> &[(usize, usize, f64)] {
        &self.transitions
    }

    pub fn steady_state(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn activity(&self) -> f64 {
        self.escape.iter().zip(self.p.iter()).map(|(g, p)| g * p).sum()
    }

    pub fn residual_time(&self) -> Result<f64> {
        check_escape(&self.escape)?;
        Ok(self.escape.iter().zip(self.p.iter()).map(|(g, p)| p / g).sum())
    }

    /// Weight `1/Γ_from` for each transition.
    pub fn hyperaccurate_weights(&self) -> Result<Vec<f64>> {
        check_escape(&self.escape)?;
        Ok(self.transitions.iter().map(|&(from, _, _)| 1.0 / self.escape[from]).collect())
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.p * v.sum()
    }

    /// `L# v` with `L# = P L^MP P`, `P = 1 - p 1ᵀ`.
    pub fn apply_group_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        let pv = self.project(v);
        let smax = self.singular_values.iter().copied().fold(0.0, f64::max);
        let mut y = DVector::zeros(self.n);
        for (k, &s) in self.singular_values.iter().enumerate() {
            if s > KERNEL_CUTOFF * smax && s > 0.0 {
                let coeff = self.u.column(k).dot(&pv) / s;
                y += self.v_t.row(k).transpose() * coeff;
            }
        }
        self.project(&y)
    }

    /// Counting statistics for per-transition weights in
    /// [`ClassicalClockworkSpec::transitions`] order.
    pub fn evaluate(&self, weights: &[f64]) -> Result<FcsResult> {
        if weights.len() != self.transitions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} transitions",
                weights.len(),
                self.transitions.len()
            )));
        }
        let mut f = 0.0;
        let mut d1 = 0.0;
        let mut x = DVector::zeros(self.n);
        for (&(from, to, rate), &w) in self.transitions.iter().zip(weights) {
            let flux = rate * self.p[from];
            f += w * flux;
            d1 += w * w * flux;
            x[to] += w * flux;
        }
        let y = self.apply_group_inverse(&x);
        let d2: f64 = self
            .transitions
            .iter()
            .zip(weights)
            .map(|(&(from, _, rate), &w)| w * rate * y[from])
            .sum();
        let (f, d, s, degeneracy) = finish(f, d1 - 2.0 * d2, d1)?;
        Ok(FcsResult {
            f,
            d,
            s,
            accuracy: if f != 0.0 && s.is_finite() { s / f } else { 0.0 },
            dynamical_activity: self.activity(),
            residual_time: self.residual_time().ok(),
            steady_state: DMatrix::from_diagonal(&self.p.map(re)),
            degeneracy,
        })
    }
}

/// Closed-form `(F/Γ, D/Γ, S/Γ)` of the qubit clockwork at `Δ = E/Γ`.
pub fn analytic_qubit_snr(delta: f64, phi: f64) -> Result<(f64, f64, f64)> {
    if !(delta > 0.0 && delta.is_finite() && phi.is_finite()) {
        return Err(Error::InvalidParameter(format!("Delta = {delta} must be positive")));
    }
    let d2 = delta * delta;
    let d4 = d2 * d2;
    let r = (1.0 + 4.0 * d2).sqrt();
    let q = (1.0 - 4.0 * d2 + 16.0 * d4).sqrt();
    let alpha = (1.0 / r).clamp(-1.0, 1.0).acos();
    let beta = ((-1.0 + 4.0 * d2) / q).clamp(-1.0, 1.0).acos();
    let den = (1.0 + 4.0 * d2) - r * (phi - alpha).cos();
    let f = 2.0 * d2 / den;
    let d = d2
        * ((5.0 - 4.0 * d2 + 32.0 * d4) - (1.0 + 4.0 * d2) * (2.0 * (phi - alpha)).cos()
            + 4.0 * q * (phi + beta).cos())
        / den.powi(3);
    Ok((f, d, f * f / d))
}

/// `H → αH`, `J → √α J`.
pub fn rescale_dynamics(spec: &LindbladSpec, alpha: f64) -> Result<LindbladSpec> {
    spec.rescale_dynamics(alpha)
}

/// `w → w/α`.
pub fn rescale_weights(current: &IntegratedCurrent, alpha: f64) -> Result<IntegratedCurrent> {
    current.rescale_weights(alpha)
}

/// Best linear combination of independent currents.
#[derive(Clone, Debug, PartialEq)]
pub struct Combination {
    /// Coefficient of each input current; the first is one.
    pub coefficients: Vec<f64>,
    /// SNR of the combined current, `Σ_a S_a`.
    pub snr: f64,
    /// Ratio chosen at each pairwise merge.
    pub r_max: Vec<f64>,
    /// `-F₁/F₂` for the first pair, where the combined SNR vanishes.
    pub r_min: Option<f64>,
}

/// Combines independent currents `(F_a, D_a)` pairwise with
/// `r = F₂D₁/(F₁D₂)`.
pub fn optimal_combination(results: &[(f64, f64)]) -> Result<Combination> {
    let Some(&(f0, d0)) = results.first() else {
        return Err(Error::InvalidParameter("no currents to combine".into()));
    };
    for &(f, d) in results {
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!("noise {d} must be positive")));
        }
        if f == 0.0 || !f.is_finite() {
            return Err(Error::InvalidParameter("currents must be non-zero".into()));
        }
    }
    let (mut f_acc, mut d_acc) = (f0, d0);
    let mut coefficients = vec![1.0];
    let mut r_max = Vec::new();
    for &(f, d) in &results[1..] {
        let r = f * d_acc / (f_acc * d);
        coefficients.push(r);
        r_max.push(r);
        f_acc += r * f;
        d_acc += r * r * d;
    }
    Ok(Combination {
        coefficients,
        snr: f_acc * f_acc / d_acc,
        r_max,
        r_min: results.get(1).map(|&(f, _)| -f0 / f),
    })
}

fn two_state_rates(family: &ControlledFamily, a: usize) -> Result<()> {
    match family.kind() {
        ControlKind::ClassicalRing { states: 2 } if family.space().is_symmetric() => Ok(()),
        ControlKind::ClassicalRing { states: 2 } => Err(Error::Precondition(format!(
            "clockwork {a}: both rates must range over the same set"
        ))),
        _ => Err(Error::Precondition(format!("clockwork {a} is not a classical two-state clockwork"))),
    }
}

/// Maximizing memory state and per-clockwork rate index of the bound.
fn theorem1_argmax(families: &[ControlledFamily], policy: &FeedbackPolicy) -> Result<(f64, usize, Vec<usize>)> {
    if families.len() != policy.num_clockworks() {
        return Err(Error::InvalidPolicy(format!(
            "{} families for a policy over {} clockworks",
            families.len(),
            policy.num_clockworks()
        )));
    }
    for (a, fam) in families.iter().enumerate() {
        two_state_rates(fam, a + 1)?;
    }
    let mut best = (f64::NEG_INFINITY, 0, Vec::new());
    for m in 0..policy.memory_states() {
        let mut total = 0.0;
        let mut idx = Vec::with_capacity(families.len());
        for a in 0..families.len() {
            let g = policy.params(m, a + 1);
            let i = if g[1] > g[0] { 1 } else { 0 };
            total += g[i];
            idx.push(i);
        }
        if total > best.0 {
            best = (total, m, idx);
        }
    }
    Ok(best)
}

/// `max_m max_{i₁…i_G} Σ_a γ^(a)_{i_a}(m)` for two-state classical
/// clockworks whose two rates share one range.
pub fn theorem1_bound(families: &[ControlledFamily], policy: &FeedbackPolicy) -> Result<f64> {
    Ok(theorem1_argmax(families, policy)?.0)
}

/// Constant policy attaining the feedback bound.
#[derive(Clone, Debug)]
pub struct Corollary1 {
    pub policy: FeedbackPolicy,
    pub current: IntegratedCurrent,
    /// Frozen rate of each clockwork (both of its transitions).
    pub rates: Vec<f64>,
    pub bound: f64,
}

/// Freezes both rates of clockwork `a` at `γ^(a)_{i*_a}(m*)` and counts every
/// tick.
pub fn corollary1_construction(families: &[ControlledFamily], policy: &FeedbackPolicy) -> Result<Corollary1> {
    let (bound, m, idx) = theorem1_argmax(families, policy)?;
    let rates: Vec<f64> = idx.iter().enumerate().map(|(a, &i)| policy.params(m, a + 1)[i]).collect();
    let params: Vec<Vec<f64>> = rates.iter().map(|&r| vec![r, r]).collect();
    let constant = crate::feedback::constant_policy(families, &params)?;
    let current = IntegratedCurrent::total_count(constant.alphabet().iter().copied());
    Ok(Corollary1 { policy: constant, current, rates, bound })
}

/// Randomized falsification of the feedback bound on classical two-state
/// clockworks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Theorem1Check {
    pub trials: usize,
    pub seed: u64,
    pub clockworks: usize,
    pub memory_states: usize,
    /// Shared range of every rate.
    pub rate_range: [f64; 2],
    /// Random currents per instance, besides the best current `1/τ`.
    pub currents_per_trial: usize,
}

impl Default for Theorem1Check {
    fn default() -> Self {
        Self { trials: 100, seed: 0, clockworks: 2, memory_states: 3, rate_range: [0.1, 5.0], currents_per_trial: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Instance {
    pub trial: usize,
    pub bound: f64,
    /// `1/τ`, the largest SNR of any current on the chain.
    pub best_snr: f64,
    pub max_random_snr: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub instances: Vec<Theorem1Instance>,
    pub max_ratio: f64,
    /// Draws discarded for having several closed memory classes.
    pub resampled: usize,
    pub violated: bool,
}

/// Relative slack before `S > bound` counts as a violation.
pub const THEOREM1_SLACK: f64 = 1e-9;

pub fn verify_theorem1(check: &Theorem1Check) -> Result<Theorem1Report> {
    use rand::{Rng, SeedableRng};

    let [lo, hi] = check.rate_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("rate range [{lo}, {hi}] is invalid")));
    }
    if check.clockworks == 0 || check.memory_states == 0 {
        return Err(Error::InvalidParameter("need at least one clockwork and one memory state".into()));
    }
    let g = check.clockworks;
    let mdim = check.memory_states;
    let families = crate::feedback::ring_families(&vec![2; g], crate::model::Coordinate::Interval { min: lo, max: hi })?;
    let alphabet: Vec<JumpLabel> = (1..=g).flat_map(|a| (0..2).map(move |j| JumpLabel::new(a, j))).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(check.seed);
    let mut instances = Vec::with_capacity(check.trials);
    let mut resampled = 0;
    while instances.len() < check.trials {
        let update = (0..mdim).map(|_| alphabet.iter().map(|_| rng.random_range(0..mdim)).collect()).collect();
        let params = (0..mdim)
            .map(|_| (0..g).map(|_| vec![rng.random_range(lo..=hi), rng.random_range(lo..=hi)]).collect())
            .collect();
        let policy = FeedbackPolicy::new(mdim, alphabet.clone(), update, params)?;
        let chain = crate::feedback::classical_feedback_rate_matrix(&vec![2; g], &policy)?;
        let fcs = match ClassicalFcs::new(&chain.spec) {
            Ok(f) => f,
            Err(Error::KernelDimension { .. }) if resampled < 100 * check.trials.max(1) => {
                resampled += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let bound = theorem1_bound(&families, &policy)?;
        let best_snr = 1.0 / fcs.residual_time()?;
        let mut max_random_snr: f64 = 0.0;
        for _ in 0..check.currents_per_trial {
            let mut current = IntegratedCurrent::new();
            for &l in &alphabet {
                current.set(l, rng.random_range(-2.0..2.0));
            }
            let r = fcs.evaluate(&chain.weights(&current)?)?;
            if r.degeneracy.is_none() {
                max_random_snr = max_random_snr.max(r.s);
            }
        }
        let ratio = best_snr.max(max_random_snr) / bound;
        instances.push(Theorem1Instance { trial: instances.len(), bound, best_snr, max_random_snr, ratio });
    }
    let max_ratio = instances.iter().map(|i| i.ratio).fold(0.0, f64::max);
    Ok(Theorem1Report { instances, max_ratio, resampled, violated: max_ratio > 1.0 + THEOREM1_SLACK })
}
