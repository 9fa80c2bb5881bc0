//! Clockwork descriptions: Hamiltonians with labelled jump operators, control
//! families, classical chains and independent composition.
//!
//! Tensor factors are always ordered by ascending clockwork index; the
//! feedback memory, when present, is the last factor.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, re, ComplexMatrix, C64};

const HERMITIAN_TOL: f64 = 1e-12;

/// Identifies a jump type `j` of clockwork `a` (1-based). Jumps of a joint
/// feedback system additionally record the memory state before the jump.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JumpLabel {
    #[serde(rename = "a")]
    pub clockwork: usize,
    #[serde(rename = "j")]
    pub jump: usize,
    #[serde(rename = "m", default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<usize>,
}

impl JumpLabel {
    pub fn new(clockwork: usize, jump: usize) -> Self {
        Self { clockwork, jump, memory: None }
    }

    pub fn with_memory(self, memory: usize) -> Self {
        Self { memory: Some(memory), ..self }
    }

    /// The `(a, j)` part, dropping any memory tag.
    pub fn base(self) -> Self {
        Self { memory: None, ..self }
    }
}

impl fmt::Display for JumpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.memory {
            Some(m) => write!(f, "({},{},{})", self.clockwork, self.jump, m),
            None => write!(f, "({},{})", self.clockwork, self.jump),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jump {
    pub label: JumpLabel,
    pub op: ComplexMatrix,
}

/// Hamiltonian plus labelled jump operators on a `dim`-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladSpec {
    dim: usize,
    hamiltonian: ComplexMatrix,
    jumps: Vec<Jump>,
}

impl LindbladSpec {
    pub fn new(hamiltonian: ComplexMatrix, jumps: Vec<Jump>) -> Result<Self> {
        let dim = hamiltonian.nrows();
        if hamiltonian.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "hamiltonian is {}x{}",
                hamiltonian.nrows(),
                hamiltonian.ncols()
            )));
        }
        linalg::ensure_finite(&hamiltonian)?;
        let herm = linalg::hermiticity_residual(&hamiltonian);
        if herm > HERMITIAN_TOL * hamiltonian.norm().max(1.0) {
            return Err(Error::NonHermitian { norm: herm });
        }
        let mut seen = BTreeSet::new();
        for jump in &jumps {
            if jump.op.nrows() != dim || jump.op.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "jump {} is {}x{}, expected {dim}x{dim}",
                    jump.label,
                    jump.op.nrows(),
                    jump.op.ncols()
                )));
            }
            linalg::ensure_finite(&jump.op)?;
            if !seen.insert(jump.label) {
                return Err(Error::InvalidParameter(format!("duplicate jump label {}", jump.label)));
            }
        }
        Ok(Self { dim, hamiltonian, jumps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn labels(&self) -> impl Iterator<Item = JumpLabel> + '_ {
        self.jumps.iter().map(|j| j.label)
    }

    pub fn jump(&self, label: JumpLabel) -> Option<&ComplexMatrix> {
        self.jumps.iter().find(|j| j.label == label).map(|j| &j.op)
    }

    /// `H → αH`, `J → √α J`: the generator is multiplied by `α`.
    pub fn rescale_dynamics(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("dynamics rescaling factor {alpha} must be > 0")));
        }
        let s = re(alpha.sqrt());
        Ok(Self {
            dim: self.dim,
            hamiltonian: &self.hamiltonian * re(alpha),
            jumps: self
                .jumps
                .iter()
                .map(|j| Jump { label: j.label, op: &j.op * s })
                .collect(),
        })
    }

    /// Replaces the clockwork index of every label.
    pub fn relabel_clockwork(mut self, clockwork: usize) -> Self {
        for j in &mut self.jumps {
            j.label.clockwork = clockwork;
        }
        self
    }
}

/// `|ψ⟩ = (|0⟩ + e^{iφ}|1⟩)/√2`.
fn phase_state(phi: f64) -> [C64; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [re(s), C64::from_polar(s, phi)]
}

/// Two-level clockwork with `H = -(E/2)σ_z` and the single jump
/// `J = √Γ |φ⟩⟨+|`.
pub fn qubit_clockwork(energy: f64, phi: f64, gamma: f64) -> Result<LindbladSpec> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("rate Gamma = {gamma} must be positive")));
    }
    if !(energy.is_finite() && phi.is_finite()) {
        return Err(Error::InvalidParameter("energy and phase must be finite".into()));
    }
    let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![re(-energy / 2.0), re(energy / 2.0)]));
    let ket = phase_state(phi);
    let plus = std::f64::consts::FRAC_1_SQRT_2;
    let sg = gamma.sqrt();
    let j = DMatrix::from_fn(2, 2, |r, _| ket[r] * re(plus * sg));
    LindbladSpec::new(h, vec![Jump { label: JumpLabel::new(1, 0), op: j }])
}

/// Continuous-time Markov chain given by transition rates `R[k][l]` (`l → k`).
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalClockworkSpec {
    rates: DMatrix<f64>,
}

impl ClassicalClockworkSpec {
    pub fn new(rates: DMatrix<f64>) -> Result<Self> {
        if rates.nrows() == 0 || rates.nrows() != rates.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "rate matrix must be square and non-empty, got {}x{}",
                rates.nrows(),
                rates.ncols()
            )));
        }
        for k in 0..rates.nrows() {
            for l in 0..rates.ncols() {
                let r = rates[(k, l)];
                if !r.is_finite() || r < 0.0 {
                    return Err(Error::InvalidParameter(format!("rate R[{k}][{l}] = {r} must be finite and >= 0")));
                }
                if k == l && r != 0.0 {
                    return Err(Error::InvalidParameter(format!("diagonal rate R[{k}][{k}] must be zero")));
                }
            }
        }
        Ok(Self { rates })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("rate rows must form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |k, l| rows[k][l]))
    }

    /// Unidirectional ring `x → x+1 mod d` with rate `rates[x]` out of `x`.
    pub fn ring(rates: &[f64]) -> Result<Self> {
        let d = rates.len();
        if d < 2 {
            return Err(Error::InvalidParameter("a ring needs at least two states".into()));
        }
        let mut r = DMatrix::zeros(d, d);
        for (x, &rate) in rates.iter().enumerate() {
            r[((x + 1) % d, x)] = rate;
        }
        Self::new(r)
    }

    pub fn num_states(&self) -> usize {
        self.rates.nrows()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// `Γ_l = Σ_k R_kl`.
    pub fn escape_rates(&self) -> Vec<f64> {
        (0..self.num_states()).map(|l| self.rates.column(l).sum()).collect()
    }

    /// Generator `L` with `L_kl = R_kl` off the diagonal and `-Γ_l` on it.
    pub fn generator(&self) -> DMatrix<f64> {
        let mut l = self.rates.clone();
        for (i, g) in self.escape_rates().into_iter().enumerate() {
            l[(i, i)] = -g;
        }
        l
    }

    /// Non-zero transitions `(from, to, rate)`, ordered by source then target.
    /// The position in this list is the jump index used by
    /// [`classical_to_lindblad`].
    pub fn transitions(&self) -> Vec<(usize, usize, f64)> {
        let n = self.num_states();
        let mut out = Vec::new();
        for l in 0..n {
            for k in 0..n {
                let r = self.rates[(k, l)];
                if r > 0.0 {
                    out.push((l, k, r));
                }
            }
        }
        out
    }
}

/// `H = 0` and one jump `√R_kl |k⟩⟨l|` per non-zero rate, labelled `(1, t)`
/// with `t` the index into [`ClassicalClockworkSpec::transitions`].
pub fn classical_to_lindblad(spec: &ClassicalClockworkSpec) -> LindbladSpec {
    let n = spec.num_states();
    let jumps = spec
        .transitions()
        .into_iter()
        .enumerate()
        .map(|(t, (from, to, rate))| {
            let mut op = ComplexMatrix::zeros(n, n);
            op[(to, from)] = re(rate.sqrt());
            Jump { label: JumpLabel::new(1, t), op }
        })
        .collect();
    LindbladSpec::new(ComplexMatrix::zeros(n, n), jumps).expect("classical embedding is always valid")
}

/// Ring clockwork keeping every jump `J_x = √c_x |x+1⟩⟨x|`, including zero
/// rates, so the label set does not depend on the parameters.
pub fn ring_clockwork(rates: &[f64]) -> Result<LindbladSpec> {
    let d = rates.len();
    if d < 2 {
        return Err(Error::InvalidParameter("a ring needs at least two states".into()));
    }
    if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::InvalidParameter(format!("ring rate {r} must be finite and >= 0")));
    }
    let jumps = rates
        .iter()
        .enumerate()
        .map(|(x, &rate)| {
            let mut op = ComplexMatrix::zeros(d, d);
            op[((x + 1) % d, x)] = re(rate.sqrt());
            Jump { label: JumpLabel::new(1, x), op }
        })
        .collect();
    LindbladSpec::new(ComplexMatrix::zeros(d, d), jumps)
}

/// `1 ⊗ … ⊗ op ⊗ … ⊗ 1` with `op` at `position` among factors of `dims`.
pub fn embed(op: &ComplexMatrix, position: usize, dims: &[usize]) -> Result<ComplexMatrix> {
    let before: usize = dims[..position].iter().product();
    let after: usize = dims[position + 1..].iter().product();
    let left = linalg::kron(&ComplexMatrix::identity(before, before), op)?;
    linalg::kron(&left, &ComplexMatrix::identity(after, after))
}

/// Independent clockworks on the ordered tensor product. Jump labels are
/// re-indexed so that clockwork `a` is the `a`-th spec (1-based).
pub fn compose_independent(specs: &[LindbladSpec]) -> Result<LindbladSpec> {
    if specs.is_empty() {
        return Err(Error::InvalidParameter("compose_independent needs at least one spec".into()));
    }
    let dims: Vec<usize> = specs.iter().map(LindbladSpec::dim).collect();
    let total: usize = dims.iter().product();
    let mut h = ComplexMatrix::zeros(total, total);
    let mut jumps = Vec::new();
    for (pos, spec) in specs.iter().enumerate() {
        h += embed(spec.hamiltonian(), pos, &dims)?;
        for j in spec.jumps() {
            jumps.push(Jump {
                label: JumpLabel { clockwork: pos + 1, ..j.label },
                op: embed(&j.op, pos, &dims)?,
            });
        }
    }
    LindbladSpec::new(h, jumps)
}

/// One coordinate of a parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    /// Closed interval.
    Interval { min: f64, max: f64 },
    /// Half-open `[min, max)`, wrapped rather than clamped by optimizers.
    Periodic { min: f64, max: f64 },
    /// Explicit finite set of allowed values.
    Finite(Vec<f64>),
}

impl Coordinate {
    const TOL: f64 = 1e-12;

    pub fn contains(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match self {
            Coordinate::Interval { min, max } => x >= min - Self::TOL && x <= max + Self::TOL,
            Coordinate::Periodic { min, max } => x >= min - Self::TOL && x < max + Self::TOL,
            Coordinate::Finite(vals) => vals.iter().any(|v| (v - x).abs() <= Self::TOL),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace(pub Vec<Coordinate>);

impl ParameterSpace {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, c: &[f64]) -> bool {
        c.len() == self.0.len() && self.0.iter().zip(c).all(|(coord, &x)| coord.contains(x))
    }

    /// Every coordinate admits the same range (`P = P̃ × … × P̃`).
    pub fn is_symmetric(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }

    pub fn scalar(coord: Coordinate) -> Self {
        Self(vec![coord])
    }
}

/// Unitary family for time-based control.
#[derive(Clone, Debug, PartialEq)]
pub enum UnitaryFamily {
    /// `U(c) = exp(-i c G)` for a hermitian generator `G`.
    Generator(ComplexMatrix),
    /// `U(c) = table[c]` for integer-valued `c`.
    Table(Vec<ComplexMatrix>),
}

impl UnitaryFamily {
    fn at(&self, x: f64) -> Result<ComplexMatrix> {
        match self {
            UnitaryFamily::Generator(g) => Ok((g * c(0.0, -x)).exp()),
            UnitaryFamily::Table(table) => {
                let idx = x.round();
                if (x - idx).abs() > 1e-12 || idx < 0.0 || idx as usize >= table.len() {
                    return Err(Error::InvalidParameter(format!("no unitary for parameter {x}")));
                }
                Ok(table[idx as usize].clone())
            }
        }
    }
}

fn check_unitary(u: &ComplexMatrix) -> Result<()> {
    if u.nrows() != u.ncols() {
        return Err(Error::DimensionMismatch("unitary must be square".into()));
    }
    let n = u.nrows();
    let dev = (u.adjoint() * u - ComplexMatrix::identity(n, n)).norm();
    if dev > 1e-10 {
        return Err(Error::InvalidParameter(format!("matrix is not unitary: ||U†U - 1|| = {dev:e}")));
    }
    Ok(())
}

/// How a parameter vector `c` enters the clockwork's generator.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlKind {
    /// No control; the parameter vector is empty.
    Fixed(LindbladSpec),
    /// `H(c) = c H`.
    Energy(LindbladSpec),
    /// `J(c) = √c J` for every jump.
    JumpStrength(LindbladSpec),
    /// `J(c) = U(c) J`.
    TimeUnitary { base: LindbladSpec, unitaries: UnitaryFamily },
    /// `H(c) = H₁⊗1 + 1⊗H₂ + c H_int` with fixed jumps on the composite.
    Coupling {
        h1: ComplexMatrix,
        h2: ComplexMatrix,
        interaction: ComplexMatrix,
        jumps: Vec<Jump>,
    },
    /// Qubit clockwork with `c = (E, φ)` at fixed `Γ`.
    Qubit { gamma: f64 },
    /// Classical ring with `c` the escape rate of each state.
    ClassicalRing { states: usize },
}

/// A clockwork whose generator depends on a parameter vector drawn from a
/// declared parameter space. Building is a pure function of `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledFamily {
    space: ParameterSpace,
    kind: ControlKind,
}

impl ControlledFamily {
    pub fn new(kind: ControlKind, space: ParameterSpace) -> Result<Self> {
        let expected = match &kind {
            ControlKind::Fixed(_) => Some(0),
            ControlKind::Energy(_) | ControlKind::JumpStrength(_) | ControlKind::TimeUnitary { .. } => Some(1),
            ControlKind::Coupling { .. } => Some(1),
            ControlKind::Qubit { .. } => Some(2),
            ControlKind::ClassicalRing { states } => Some(*states),
        };
        if let Some(k) = expected {
            if space.dimension() != k {
                return Err(Error::InvalidParameter(format!(
                    "parameter space has {} coordinates, control kind needs {k}",
                    space.dimension()
                )));
            }
        }
        match &kind {
            ControlKind::JumpStrength(_) | ControlKind::ClassicalRing { .. } => {
                let negative = space.0.iter().any(|coord| match coord {
                    Coordinate::Interval { min, .. } | Coordinate::Periodic { min, .. } => *min < 0.0,
                    Coordinate::Finite(v) => v.iter().any(|x| *x < 0.0),
                });
                if negative {
                    return Err(Error::InvalidParameter("jump strengths and rates must be non-negative".into()));
                }
            }
            ControlKind::TimeUnitary { base, unitaries } => match unitaries {
                UnitaryFamily::Generator(g) => {
                    if g.nrows() != base.dim() || linalg::hermiticity_residual(g) > HERMITIAN_TOL * g.norm().max(1.0) {
                        return Err(Error::InvalidParameter("unitary generator must be hermitian with the base dimension".into()));
                    }
                }
                UnitaryFamily::Table(table) => {
                    for u in table {
                        check_unitary(u)?;
                        if u.nrows() != base.dim() {
                            return Err(Error::DimensionMismatch("unitary dimension differs from base".into()));
                        }
                    }
                }
            },
            ControlKind::Coupling { h1, h2, interaction, jumps } => {
                let d = h1.nrows() * h2.nrows();
                if interaction.nrows() != d || interaction.ncols() != d {
                    return Err(Error::DimensionMismatch("interaction must act on the composite space".into()));
                }
                if jumps.iter().any(|j| j.op.nrows() != d) {
                    return Err(Error::DimensionMismatch("coupled jumps must act on the composite space".into()));
                }
            }
            ControlKind::Qubit { gamma } => {
                if !(*gamma > 0.0) {
                    return Err(Error::InvalidParameter(format!("rate Gamma = {gamma} must be positive")));
                }
            }
            _ => {}
        }
        Ok(Self { space, kind })
    }

    pub fn fixed(spec: LindbladSpec) -> Self {
        Self { space: ParameterSpace::default(), kind: ControlKind::Fixed(spec) }
    }

    pub fn energy(base: LindbladSpec, range: Coordinate) -> Result<Self> {
        Self::new(ControlKind::Energy(base), ParameterSpace::scalar(range))
    }

    pub fn jump_strength(base: LindbladSpec, range: Coordinate) -> Result<Self> {
        Self::new(ControlKind::JumpStrength(base), ParameterSpace::scalar(range))
    }

    pub fn time_unitary(base: LindbladSpec, unitaries: UnitaryFamily, range: Coordinate) -> Result<Self> {
        Self::new(ControlKind::TimeUnitary { base, unitaries }, ParameterSpace::scalar(range))
    }

    pub fn coupling(
        h1: ComplexMatrix,
        h2: ComplexMatrix,
        interaction: ComplexMatrix,
        jumps: Vec<Jump>,
        range: Coordinate,
    ) -> Result<Self> {
        Self::new(ControlKind::Coupling { h1, h2, interaction, jumps }, ParameterSpace::scalar(range))
    }

    /// Qubit clockwork with `E ∈ [0, ∞)` and `φ ∈ [0, 2π)`.
    pub fn qubit(gamma: f64) -> Result<Self> {
        Self::new(
            ControlKind::Qubit { gamma },
            ParameterSpace(vec![
                Coordinate::Interval { min: 0.0, max: f64::INFINITY },
                Coordinate::Periodic { min: 0.0, max: 2.0 * PI },
            ]),
        )
    }

    /// Classical ring whose `states` escape rates all range over `range`.
    pub fn classical_ring(states: usize, range: Coordinate) -> Result<Self> {
        Self::new(ControlKind::ClassicalRing { states }, ParameterSpace(vec![range; states]))
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn kind(&self) -> &ControlKind {
        &self.kind
    }

    pub fn is_classical(&self) -> bool {
        matches!(self.kind, ControlKind::ClassicalRing { .. })
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ControlKind::Fixed(s) | ControlKind::Energy(s) | ControlKind::JumpStrength(s) => s.dim(),
            ControlKind::TimeUnitary { base, .. } => base.dim(),
            ControlKind::Coupling { h1, h2, .. } => h1.nrows() * h2.nrows(),
            ControlKind::Qubit { .. } => 2,
            ControlKind::ClassicalRing { states } => *states,
        }
    }

    /// Labels of the built spec; identical for every parameter value.
    pub fn labels(&self) -> Vec<JumpLabel> {
        match &self.kind {
            ControlKind::Fixed(s) | ControlKind::Energy(s) | ControlKind::JumpStrength(s) => s.labels().collect(),
            ControlKind::TimeUnitary { base, .. } => base.labels().collect(),
            ControlKind::Coupling { jumps, .. } => jumps.iter().map(|j| j.label).collect(),
            ControlKind::Qubit { .. } => vec![JumpLabel::new(1, 0)],
            ControlKind::ClassicalRing { states } => (0..*states).map(|x| JumpLabel::new(1, x)).collect(),
        }
    }

    pub fn build(&self, c: &[f64]) -> Result<LindbladSpec> {
        if !self.space.contains(c) {
            return Err(Error::InvalidParameter(format!("parameter {c:?} outside the family's parameter space")));
        }
        match &self.kind {
            ControlKind::Fixed(s) => Ok(s.clone()),
            ControlKind::Energy(s) => LindbladSpec::new(s.hamiltonian() * re(c[0]), s.jumps().to_vec()),
            ControlKind::JumpStrength(s) => {
                if c[0] < 0.0 {
                    return Err(Error::InvalidParameter(format!("jump strength {} must be >= 0", c[0])));
                }
                let k = re(c[0].sqrt());
                let jumps = s.jumps().iter().map(|j| Jump { label: j.label, op: &j.op * k }).collect();
                LindbladSpec::new(s.hamiltonian().clone(), jumps)
            }
            ControlKind::TimeUnitary { base, unitaries } => {
                let u = unitaries.at(c[0])?;
                let jumps = base.jumps().iter().map(|j| Jump { label: j.label, op: &u * &j.op }).collect();
                LindbladSpec::new(base.hamiltonian().clone(), jumps)
            }
            ControlKind::Coupling { h1, h2, interaction, jumps } => {
                let i1 = ComplexMatrix::identity(h1.nrows(), h1.nrows());
                let i2 = ComplexMatrix::identity(h2.nrows(), h2.nrows());
                let h = linalg::kron(h1, &i2)? + linalg::kron(&i1, h2)? + interaction * re(c[0]);
                LindbladSpec::new(h, jumps.clone())
            }
            ControlKind::Qubit { gamma } => qubit_clockwork(c[0], c[1], *gamma),
            ControlKind::ClassicalRing { .. } => ring_clockwork(c),
        }
    }
}
