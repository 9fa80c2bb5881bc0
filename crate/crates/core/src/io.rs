//! JSON model, policy and family files, and CSV record formatting.
//!
//! Matrices are written as `{"re": [[..]], "im": [[..]]}` in row order; `im`
//! may be omitted for real matrices. A model is one of
//!
//! ```json
//! {"dim": 2, "hamiltonian": {"re": [[0,0],[0,0]]},
//!  "jumps": [{"label": {"a": 1, "j": 0}, "matrix": {"re": [[0,1],[0,0]]}}]}
//! {"num_states": 2, "rates": [[0, 2], [1, 0]]}
//! {"qubit_clockwork": {"energy": 0.84, "phi": 3.61, "gamma": 1.0}}
//! ```
//!
//! Classical `rates[k][l]` is the rate of `l → k`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcs::FcsResult;
use crate::feedback::FeedbackPolicy;
use crate::linalg::{c, ComplexMatrix};
use crate::model::{
    classical_to_lindblad, qubit_clockwork, ClassicalClockworkSpec, ControlledFamily, Coordinate, Jump, JumpLabel,
    LindbladSpec, UnitaryFamily,
};
use crate::sweep::SweepRow;
use crate::trajectory::TrajectoryStats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixFile {
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let rows = self.re.len();
        let cols = self.re.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || self.re.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse("matrix rows must be non-empty and of equal length".into()));
        }
        if let Some(im) = &self.im {
            if im.len() != rows || im.iter().any(|r| r.len() != cols) {
                return Err(Error::Parse("imaginary part has a different shape".into()));
            }
        }
        let m = ComplexMatrix::from_fn(rows, cols, |r, k| {
            c(self.re[r][k], self.im.as_ref().map_or(0.0, |im| im[r][k]))
        });
        crate::linalg::ensure_finite(&m)?;
        Ok(m)
    }

    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let re = (0..m.nrows()).map(|r| (0..m.ncols()).map(|k| m[(r, k)].re).collect()).collect();
        let im: Vec<Vec<f64>> = (0..m.nrows()).map(|r| (0..m.ncols()).map(|k| m[(r, k)].im).collect()).collect();
        let any_im = im.iter().flatten().any(|x| *x != 0.0);
        Self { re, im: any_im.then_some(im) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpFile {
    pub label: JumpLabel,
    pub matrix: MatrixFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitFile {
    pub energy: f64,
    pub phi: f64,
    #[serde(default = "one")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Quantum {
        dim: usize,
        hamiltonian: MatrixFile,
        jumps: Vec<JumpFile>,
    },
    Classical {
        num_states: usize,
        rates: Vec<Vec<f64>>,
    },
    Qubit {
        qubit_clockwork: QubitFile,
    },
}

impl ModelFile {
    pub fn to_spec(&self) -> Result<LindbladSpec> {
        match self {
            ModelFile::Quantum { dim, hamiltonian, jumps } => {
                let h = hamiltonian.to_matrix()?;
                if h.nrows() != *dim || h.ncols() != *dim {
                    return Err(Error::DimensionMismatch(format!(
                        "hamiltonian is {}x{}, declared dim {dim}",
                        h.nrows(),
                        h.ncols()
                    )));
                }
                let jumps = jumps
                    .iter()
                    .map(|j| Ok(Jump { label: j.label, op: j.matrix.to_matrix()? }))
                    .collect::<Result<Vec<_>>>()?;
                LindbladSpec::new(h, jumps)
            }
            ModelFile::Classical { .. } => Ok(classical_to_lindblad(&self.to_classical()?)),
            ModelFile::Qubit { qubit_clockwork: q } => qubit_clockwork(q.energy, q.phi, q.gamma),
        }
    }

    pub fn to_classical(&self) -> Result<ClassicalClockworkSpec> {
        match self {
            ModelFile::Classical { num_states, rates } => {
                if rates.len() != *num_states {
                    return Err(Error::DimensionMismatch(format!(
                        "{} rate rows for {num_states} states",
                        rates.len()
                    )));
                }
                ClassicalClockworkSpec::from_rows(rates)
            }
            _ => Err(Error::NotClassical("model is not given as a rate matrix".into())),
        }
    }

    pub fn is_classical(&self) -> bool {
        matches!(self, ModelFile::Classical { .. })
    }

    pub fn from_spec(spec: &LindbladSpec) -> Self {
        ModelFile::Quantum {
            dim: spec.dim(),
            hamiltonian: MatrixFile::from_matrix(spec.hamiltonian()),
            jumps: spec
                .jumps()
                .iter()
                .map(|j| JumpFile { label: j.label, matrix: MatrixFile::from_matrix(&j.op) })
                .collect(),
        }
    }
}

/// Unitary family of a time-based control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitaryFile {
    Generator(MatrixFile),
    Table(Vec<MatrixFile>),
}

/// One controlled clockwork of a feedback system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyFile {
    Fixed { model: ModelFile },
    Energy { model: ModelFile, range: Coordinate },
    JumpStrength { model: ModelFile, range: Coordinate },
    TimeUnitary { model: ModelFile, unitaries: UnitaryFile, range: Coordinate },
    Coupling { h1: MatrixFile, h2: MatrixFile, interaction: MatrixFile, jumps: Vec<JumpFile>, range: Coordinate },
    /// Parameters `(E, φ)`.
    Qubit {
        #[serde(default = "one")]
        gamma: f64,
    },
    /// Parameters are the escape rates of the ring's states.
    ClassicalRing { states: usize, range: Coordinate },
}

impl FamilyFile {
    pub fn to_family(&self) -> Result<ControlledFamily> {
        match self {
            FamilyFile::Fixed { model } => Ok(ControlledFamily::fixed(model.to_spec()?)),
            FamilyFile::Energy { model, range } => ControlledFamily::energy(model.to_spec()?, range.clone()),
            FamilyFile::JumpStrength { model, range } => ControlledFamily::jump_strength(model.to_spec()?, range.clone()),
            FamilyFile::TimeUnitary { model, unitaries, range } => {
                let fam = match unitaries {
                    UnitaryFile::Generator(g) => UnitaryFamily::Generator(g.to_matrix()?),
                    UnitaryFile::Table(t) => {
                        UnitaryFamily::Table(t.iter().map(MatrixFile::to_matrix).collect::<Result<_>>()?)
                    }
                };
                ControlledFamily::time_unitary(model.to_spec()?, fam, range.clone())
            }
            FamilyFile::Coupling { h1, h2, interaction, jumps, range } => ControlledFamily::coupling(
                h1.to_matrix()?,
                h2.to_matrix()?,
                interaction.to_matrix()?,
                jumps
                    .iter()
                    .map(|j| Ok(Jump { label: j.label, op: j.matrix.to_matrix()? }))
                    .collect::<Result<Vec<_>>>()?,
                range.clone(),
            ),
            FamilyFile::Qubit { gamma } => ControlledFamily::qubit(*gamma),
            FamilyFile::ClassicalRing { states, range } => ControlledFamily::classical_ring(*states, range.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateEntry {
    pub m: usize,
    pub label: JumpLabel,
    pub next_m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub m: usize,
    pub a: usize,
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub memory_states: usize,
    pub update_table: Vec<UpdateEntry>,
    pub params: Vec<ParamEntry>,
}

impl PolicyFile {
    /// Checks totality and reports the first gap with its coordinates.
    pub fn to_policy(&self) -> Result<FeedbackPolicy> {
        let mdim = self.memory_states;
        if mdim == 0 {
            return Err(Error::InvalidPolicy("memory_states must be at least 1".into()));
        }
        let alphabet: Vec<JumpLabel> = self
            .update_table
            .iter()
            .map(|e| e.label.base())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut table = BTreeMap::new();
        for e in &self.update_table {
            if e.m >= mdim || e.next_m >= mdim {
                return Err(Error::InvalidPolicy(format!(
                    "update entry m = {}, label {} -> {} leaves the memory 0..{mdim}",
                    e.m, e.label, e.next_m
                )));
            }
            if table.insert((e.m, e.label.base()), e.next_m).is_some() {
                return Err(Error::InvalidPolicy(format!("duplicate update entry m = {}, label {}", e.m, e.label)));
            }
        }
        let update = (0..mdim)
            .map(|m| {
                alphabet
                    .iter()
                    .map(|l| {
                        table
                            .get(&(m, *l))
                            .copied()
                            .ok_or_else(|| Error::InvalidPolicy(format!("update table has no entry for m = {m}, label {l}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let g = self
            .params
            .iter()
            .map(|p| p.a)
            .chain(alphabet.iter().map(|l| l.clockwork))
            .max()
            .unwrap_or(0);
        let mut params = vec![vec![None; g]; mdim];
        for p in &self.params {
            if p.m >= mdim || p.a == 0 {
                return Err(Error::InvalidPolicy(format!("parameter entry m = {}, a = {} is out of range", p.m, p.a)));
            }
            if params[p.m][p.a - 1].replace(p.c.clone()).is_some() {
                return Err(Error::InvalidPolicy(format!("duplicate parameters for m = {}, a = {}", p.m, p.a)));
            }
        }
        let params = params
            .into_iter()
            .enumerate()
            .map(|(m, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(a, c)| c.ok_or_else(|| Error::InvalidPolicy(format!("no parameters for m = {m}, a = {}", a + 1))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        FeedbackPolicy::new(mdim, alphabet, update, params)
    }

    pub fn from_policy(policy: &FeedbackPolicy) -> Self {
        let mut update_table = Vec::new();
        let mut params = Vec::new();
        for m in 0..policy.memory_states() {
            for (k, l) in policy.alphabet().iter().enumerate() {
                update_table.push(UpdateEntry { m, label: *l, next_m: policy.update_table()[m][k] });
            }
            for a in 1..=policy.num_clockworks() {
                params.push(ParamEntry { m, a, c: policy.params(m, a).to_vec() });
            }
        }
        Self { memory_states: policy.memory_states(), update_table, params }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// A value given inline or as a path to a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    /// Relative paths are resolved against `base`.
    pub fn load(&self, base: &Path) -> Result<T> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Path(p) => read_json(&if p.is_absolute() { p.clone() } else { base.join(p) }),
        }
    }
}

/// `%.12g`-style formatting.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub const FCS_HEADER: [&str; 8] = ["F", "D", "S", "accuracy", "activity", "residual_time", "flag", "steady_state_trace"];

/// `F, D, S, accuracy, activity, residual_time, flag, trace(ρ)`; `S` is
/// written as zero for flagged results.
pub fn fcs_record(r: &FcsResult) -> Vec<String> {
    vec![
        fmt_float(r.f),
        fmt_float(r.d),
        fmt_float(if r.degeneracy.is_some() { 0.0 } else { r.s }),
        fmt_float(r.accuracy),
        fmt_float(r.dynamical_activity),
        r.residual_time.map(fmt_float).unwrap_or_default(),
        r.degeneracy.map(|d| d.as_str().to_string()).unwrap_or_default(),
        fmt_float(r.steady_state.trace().re),
    ]
}

pub fn sweep_header(axes: &[String]) -> Vec<String> {
    axes.iter().cloned().chain(["F", "D", "S", "flag"].map(String::from)).collect()
}

pub fn sweep_record(row: &SweepRow) -> Vec<String> {
    row.params
        .iter()
        .map(|x| fmt_float(*x))
        .chain([fmt_float(row.f), fmt_float(row.d), fmt_float(row.s), row.flag.clone().unwrap_or_default()])
        .collect()
}

pub const TRAJECTORY_HEADER: [&str; 11] =
    ["horizon", "n_traj", "mean_N", "var_N", "F_hat", "D_hat", "se_F", "se_D", "S_hat", "se_S", "seed"];

pub fn trajectory_record(s: &TrajectoryStats) -> Vec<String> {
    vec![
        fmt_float(s.horizon),
        s.n_traj.to_string(),
        fmt_float(s.mean_n),
        fmt_float(s.var_n),
        fmt_float(s.f_hat),
        fmt_float(s.d_hat),
        fmt_float(s.se_f),
        fmt_float(s.se_d),
        fmt_float(s.s_hat),
        fmt_float(s.se_s),
        s.seed.to_string(),
    ]
}
