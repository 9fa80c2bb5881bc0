//! Incoherent feedback: a classical memory that switches clockwork parameters
//! after each observed jump.
//!
//! A policy fixes a finite memory `M = {0, …, |M|-1}`, a transition table
//! `U(m, (a, j))` and the parameter vector `γ^(a)(m)` of every clockwork in
//! every memory state. The joint generator acts on
//! `H_{C_1} ⊗ … ⊗ H_{C_G} ⊗ H_M` and its jumps carry the pre-jump memory as
//! a third label component.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fcs::{ClassicalFcs, IntegratedCurrent};
use crate::linalg::{self, re, ComplexMatrix};
use crate::model::{
    embed, ClassicalClockworkSpec, ControlKind, ControlledFamily, Coordinate, Jump, JumpLabel, LindbladSpec,
    ParameterSpace,
};

#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPolicy {
    memory_states: usize,
    alphabet: Vec<JumpLabel>,
    update: Vec<Vec<usize>>,
    params: Vec<Vec<Vec<f64>>>,
}

impl FeedbackPolicy {
    /// `update[m][k]` is the memory after jump `alphabet[k]` in memory `m`;
    /// `params[m][a-1]` is `γ^(a)(m)`.
    pub fn new(
        memory_states: usize,
        alphabet: Vec<JumpLabel>,
        update: Vec<Vec<usize>>,
        params: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if memory_states == 0 {
            return Err(Error::InvalidPolicy("memory must have at least one state".into()));
        }
        if update.len() != memory_states || params.len() != memory_states {
            return Err(Error::InvalidPolicy(format!(
                "update table and parameters must cover all {memory_states} memory states"
            )));
        }
        let g = params[0].len();
        if g == 0 {
            return Err(Error::InvalidPolicy("policy controls no clockwork".into()));
        }
        if let Some(m) = params.iter().position(|p| p.len() != g) {
            return Err(Error::InvalidPolicy(format!("memory state {m} sets {} clockworks, expected {g}", params[m].len())));
        }
        let mut seen = BTreeSet::new();
        for l in &alphabet {
            if l.memory.is_some() || l.clockwork == 0 || l.clockwork > g {
                return Err(Error::InvalidPolicy(format!("label {l} is not a jump of clockworks 1..={g}")));
            }
            if !seen.insert(*l) {
                return Err(Error::InvalidPolicy(format!("duplicate label {l}")));
            }
        }
        for (m, row) in update.iter().enumerate() {
            if row.len() != alphabet.len() {
                return Err(Error::InvalidPolicy(format!("update row for memory {m} is not total")));
            }
            if let Some(k) = row.iter().position(|&next| next >= memory_states) {
                return Err(Error::InvalidPolicy(format!(
                    "U({m}, {}) = {} is not a memory state",
                    alphabet[k], row[k]
                )));
            }
        }
        Ok(Self { memory_states, alphabet, update, params })
    }

    /// Builds the table from closures over memory states and labels.
    pub fn from_fn(
        memory_states: usize,
        alphabet: Vec<JumpLabel>,
        num_clockworks: usize,
        update: impl Fn(usize, JumpLabel) -> usize,
        params: impl Fn(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let table = (0..memory_states)
            .map(|m| alphabet.iter().map(|&l| update(m, l)).collect())
            .collect();
        let p = (0..memory_states)
            .map(|m| (1..=num_clockworks).map(|a| params(m, a)).collect())
            .collect();
        Self::new(memory_states, alphabet, table, p)
    }

    pub fn memory_states(&self) -> usize {
        self.memory_states
    }

    pub fn num_clockworks(&self) -> usize {
        self.params[0].len()
    }

    pub fn alphabet(&self) -> &[JumpLabel] {
        &self.alphabet
    }

    pub fn update_table(&self) -> &[Vec<usize>] {
        &self.update
    }

    /// `U(m, (a, j))`.
    pub fn next(&self, m: usize, label: JumpLabel) -> Option<usize> {
        let k = self.alphabet.iter().position(|l| *l == label.base())?;
        self.update.get(m).map(|row| row[k])
    }

    /// `γ^(a)(m)` for 1-based `a`.
    pub fn params(&self, m: usize, a: usize) -> &[f64] {
        &self.params[m][a - 1]
    }

    pub fn is_constant(&self) -> bool {
        self.memory_states == 1
    }

    /// Every parameter lies in the family's space and the alphabet equals the
    /// families' jump labels.
    pub fn check_against(&self, families: &[ControlledFamily]) -> Result<()> {
        if families.len() != self.num_clockworks() {
            return Err(Error::InvalidPolicy(format!(
                "{} families for a policy over {} clockworks",
                families.len(),
                self.num_clockworks()
            )));
        }
        let expected: BTreeSet<JumpLabel> = families
            .iter()
            .enumerate()
            .flat_map(|(a, f)| f.labels().into_iter().map(move |l| JumpLabel { clockwork: a + 1, ..l }))
            .collect();
        let have: BTreeSet<JumpLabel> = self.alphabet.iter().copied().collect();
        if let Some(missing) = expected.difference(&have).next() {
            return Err(Error::InvalidPolicy(format!("update table has no entry for jump {missing}")));
        }
        if let Some(extra) = have.difference(&expected).next() {
            return Err(Error::UnknownLabel(extra.to_string()));
        }
        for m in 0..self.memory_states {
            for (a, fam) in families.iter().enumerate() {
                let p = self.params(m, a + 1);
                if !fam.space().contains(p) {
                    return Err(Error::OutOfRange { clockwork: a + 1, memory: m, param: p.to_vec() });
                }
            }
        }
        Ok(())
    }
}

fn family_alphabet(families: &[ControlledFamily]) -> Vec<JumpLabel> {
    families
        .iter()
        .enumerate()
        .flat_map(|(a, f)| f.labels().into_iter().map(move |l| JumpLabel { clockwork: a + 1, ..l }))
        .collect()
}

/// Trivial memory; clockwork `a` is frozen at `params[a-1]`.
pub fn constant_policy(families: &[ControlledFamily], params: &[Vec<f64>]) -> Result<FeedbackPolicy> {
    let alphabet = family_alphabet(families);
    let policy = FeedbackPolicy::new(1, alphabet.clone(), vec![vec![0; alphabet.len()]], vec![params.to_vec()])?;
    policy.check_against(families)?;
    Ok(policy)
}

/// Clockwork-space dynamics while the memory sits in one state.
#[derive(Clone, Debug)]
pub struct MemoryBlock {
    pub hamiltonian: ComplexMatrix,
    pub jumps: Vec<BlockJump>,
}

#[derive(Clone, Debug)]
pub struct BlockJump {
    /// `(a, j, m)` with `m` the memory before the jump.
    pub label: JumpLabel,
    pub op: ComplexMatrix,
    pub next: usize,
}

#[derive(Clone, Debug)]
pub struct JointSystem {
    pub spec: LindbladSpec,
    pub memory_dim: usize,
    pub component_dims: Vec<usize>,
    pub blocks: Vec<MemoryBlock>,
}

impl JointSystem {
    pub fn clockwork_dim(&self) -> usize {
        self.component_dims.iter().product()
    }

    /// Joint basis index of clockwork state `x` (mixed radix) and memory `m`.
    pub fn index(&self, x: usize, m: usize) -> usize {
        x * self.memory_dim + m
    }
}

fn ket_bra(n: usize, row: usize, col: usize) -> ComplexMatrix {
    let mut k = ComplexMatrix::zeros(n, n);
    k[(row, col)] = re(1.0);
    k
}

/// Joint clockworks + memory generator:
/// `H = Σ_m Σ_a H_a(γ^(a)(m)) ⊗ |m⟩⟨m|` and jumps
/// `J_{a,j}(γ^(a)(m)) ⊗ |U(m,(a,j))⟩⟨m|`.
pub fn build_joint(families: &[ControlledFamily], policy: &FeedbackPolicy) -> Result<JointSystem> {
    policy.check_against(families)?;
    let mdim = policy.memory_states();
    let dims: Vec<usize> = families.iter().map(ControlledFamily::dim).collect();
    let cdim: usize = dims.iter().product();
    let mut blocks = Vec::with_capacity(mdim);
    for m in 0..mdim {
        let mut h = ComplexMatrix::zeros(cdim, cdim);
        let mut jumps = Vec::new();
        for (a, fam) in families.iter().enumerate() {
            let spec = fam.build(policy.params(m, a + 1))?;
            h += embed(spec.hamiltonian(), a, &dims)?;
            for jump in spec.jumps() {
                let base = JumpLabel { clockwork: a + 1, ..jump.label };
                let next = policy
                    .next(m, base)
                    .ok_or_else(|| Error::InvalidPolicy(format!("update table has no entry for jump {base}")))?;
                jumps.push(BlockJump { label: base.with_memory(m), op: embed(&jump.op, a, &dims)?, next });
            }
        }
        blocks.push(MemoryBlock { hamiltonian: h, jumps });
    }
    let n = cdim * mdim;
    let mut h = ComplexMatrix::zeros(n, n);
    for (m, block) in blocks.iter().enumerate() {
        h += linalg::kron(&block.hamiltonian, &ket_bra(mdim, m, m))?;
    }
    let mut ordered: Vec<&BlockJump> = blocks.iter().flat_map(|b| b.jumps.iter()).collect();
    ordered.sort_by_key(|j| j.label);
    let jumps = ordered
        .into_iter()
        .map(|bj| {
            let m = bj.label.memory.unwrap_or(0);
            Ok(Jump { label: bj.label, op: linalg::kron(&bj.op, &ket_bra(mdim, bj.next, m))? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JointSystem {
        spec: LindbladSpec::new(h, jumps)?,
        memory_dim: mdim,
        component_dims: dims,
        blocks,
    })
}

/// Two qubit clockworks with energy control `H(c) = -(cE*/2)σ_z` at fixed
/// phase. The memory remembers which clockwork ticked last; that clockwork
/// runs at `α₁E*`, the other at `α₂E*`.
pub fn two_qubit_switching_policy(
    alpha1: f64,
    alpha2: f64,
    e_star: f64,
    phi_star: f64,
    gamma: f64,
) -> Result<(Vec<ControlledFamily>, FeedbackPolicy)> {
    let base = crate::model::qubit_clockwork(e_star, phi_star, gamma)?;
    let range = Coordinate::Interval { min: 0.0, max: f64::INFINITY };
    let fam = ControlledFamily::energy(base, range)?;
    let families = vec![fam.clone(), fam];
    let alphabet = family_alphabet(&families);
    let policy = FeedbackPolicy::from_fn(
        2,
        alphabet,
        2,
        |_, label| label.clockwork - 1,
        |m, a| vec![if a - 1 == m { alpha1 } else { alpha2 }],
    )?;
    policy.check_against(&families)?;
    Ok((families, policy))
}

/// Internal clockwork plus an external clockwork that is switched on by each
/// internal tick and off again by its own tick.
#[derive(Clone, Debug)]
pub struct Protocol1 {
    pub families: Vec<ControlledFamily>,
    pub policy: FeedbackPolicy,
    /// Weight zero on internal ticks and one on external ticks.
    pub output: IntegratedCurrent,
}

pub fn protocol1_policy(ic: &LindbladSpec, ec_family: &ControlledFamily) -> Result<Protocol1> {
    if ic.jumps().len() != 1 {
        return Err(Error::InvalidParameter(format!(
            "internal clockwork must have exactly one jump type, found {}",
            ic.jumps().len()
        )));
    }
    if !matches!(ec_family.kind(), ControlKind::JumpStrength(_)) {
        return Err(Error::InvalidParameter("external clockwork must use jump-strength control".into()));
    }
    if !(ec_family.space().contains(&[0.0]) && ec_family.space().contains(&[1.0])) {
        return Err(Error::InvalidParameter("external clockwork strengths must include 0 and 1".into()));
    }
    let families = vec![ControlledFamily::fixed(ic.clone().relabel_clockwork(1)), ec_family.clone()];
    let alphabet = family_alphabet(&families);
    let policy = FeedbackPolicy::from_fn(
        2,
        alphabet.clone(),
        2,
        |_, label| usize::from(label.clockwork == 1),
        |m, a| if a == 1 { vec![] } else { vec![m as f64] },
    )?;
    policy.check_against(&families)?;
    let mut output = IntegratedCurrent::new();
    for l in alphabet {
        output.set(l, if l.clockwork == 1 { 0.0 } else { 1.0 });
    }
    Ok(Protocol1 { families, policy, output })
}

/// Classical ring clockworks under feedback as one Markov chain on
/// `X_1 × … × X_G × M`.
#[derive(Clone, Debug)]
pub struct ClassicalFeedbackChain {
    pub spec: ClassicalClockworkSpec,
    /// `(a, j, m)` of each entry of `spec.transitions()`.
    pub labels: Vec<JumpLabel>,
    /// Every `(a, j, m)`, including zero-rate transitions.
    pub all_labels: Vec<JumpLabel>,
    pub clockwork_dims: Vec<usize>,
    pub memory_dim: usize,
}

impl ClassicalFeedbackChain {
    pub fn weights(&self, current: &IntegratedCurrent) -> Result<Vec<f64>> {
        current.validate(&self.all_labels)?;
        Ok(self.labels.iter().map(|l| current.weight_for(*l)).collect())
    }

    pub fn fcs(&self) -> Result<ClassicalFcs> {
        ClassicalFcs::new(&self.spec)
    }
}

/// Rate `γ^(a)_{x_a}(m)` on `(x, m) → (x ⊕ 1^(a), U(m, (a, x_a)))`. The jump
/// type of a ring clockwork is its departure state.
pub fn classical_feedback_rate_matrix(clockwork_dims: &[usize], policy: &FeedbackPolicy) -> Result<ClassicalFeedbackChain> {
    let g = clockwork_dims.len();
    if g != policy.num_clockworks() {
        return Err(Error::InvalidPolicy(format!("{g} clockworks for a policy over {}", policy.num_clockworks())));
    }
    let mdim = policy.memory_states();
    for (a, &d) in clockwork_dims.iter().enumerate() {
        if d < 2 {
            return Err(Error::NotClassical(format!("clockwork {} has fewer than two states", a + 1)));
        }
        for m in 0..mdim {
            let p = policy.params(m, a + 1);
            if p.len() != d {
                return Err(Error::NotClassical(format!(
                    "clockwork {} needs {d} rates in memory {m}, policy gives {}",
                    a + 1,
                    p.len()
                )));
            }
            if p.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return Err(Error::OutOfRange { clockwork: a + 1, memory: m, param: p.to_vec() });
            }
        }
    }
    let cdim: usize = clockwork_dims.iter().product();
    let n = cdim * mdim;
    // strides of the mixed-radix clockwork index, first factor most significant
    let mut strides = vec![1; g];
    for a in (0..g.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * clockwork_dims[a + 1];
    }
    let mut rates = DMatrix::zeros(n, n);
    let mut label_of = BTreeMap::new();
    let mut all_labels = Vec::new();
    for x in 0..cdim {
        for m in 0..mdim {
            let from = x * mdim + m;
            for a in 0..g {
                let xa = (x / strides[a]) % clockwork_dims[a];
                let label = JumpLabel::new(a + 1, xa);
                let next_m = policy
                    .next(m, label)
                    .ok_or_else(|| Error::InvalidPolicy(format!("update table has no entry for jump {label}")))?;
                let shifted = (xa + 1) % clockwork_dims[a];
                let y = x - xa * strides[a] + shifted * strides[a];
                let to = y * mdim + next_m;
                let rate = policy.params(m, a + 1)[xa];
                rates[(to, from)] += rate;
                label_of.insert((from, to), label.with_memory(m));
            }
        }
    }
    for a in 0..g {
        for xa in 0..clockwork_dims[a] {
            for m in 0..mdim {
                all_labels.push(JumpLabel::new(a + 1, xa).with_memory(m));
            }
        }
    }
    let spec = ClassicalClockworkSpec::new(rates)?;
    let labels = spec.transitions().iter().map(|&(from, to, _)| label_of[&(from, to)]).collect();
    Ok(ClassicalFeedbackChain { spec, labels, all_labels, clockwork_dims: clockwork_dims.to_vec(), memory_dim: mdim })
}

/// Ring families of the given sizes, every rate ranging over `range`.
pub fn ring_families(clockwork_dims: &[usize], range: Coordinate) -> Result<Vec<ControlledFamily>> {
    clockwork_dims
        .iter()
        .map(|&d| ControlledFamily::classical_ring(d, range.clone()))
        .collect()
}

/// Parameter space shared by every family in a symmetric setting.
pub fn shared_space(families: &[ControlledFamily]) -> Option<&ParameterSpace> {
    let first = families.first()?.space();
    families.iter().all(|f| f.space() == first).then_some(first)
}
