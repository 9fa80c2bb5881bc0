//! Monte Carlo estimates of `F` and `D` from sampled jump records.
//!
//! Classical chains use Gillespie sampling. General specs use the quantum-jump
//! unraveling: between jumps the unnormalized state follows
//! `H_eff = H - (i/2) Σ J†J`, and a jump happens when `‖ψ‖²` drops below a
//! uniform threshold. Because the norm only decreases, the first-passage time
//! is located exactly (up to `h/2⁴⁰`) by dyadic bisection with precomputed
//! propagators.
//!
//! Every trajectory owns a ChaCha stream selected by its index, and results
//! are reduced in index order, so statistics do not depend on thread count.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcs::{ClassicalFcs, FcsSolver, IntegratedCurrent};
use crate::feedback::{ClassicalFeedbackChain, JointSystem};
use crate::linalg::{c, re, ComplexMatrix, ComplexVector};
use crate::model::{ClassicalClockworkSpec, JumpLabel, LindbladSpec};

const BISECTION_LEVELS: usize = 40;
const EIGEN_CUTOFF: f64 = 1e-12;
pub const DEFAULT_TRAJECTORIES: usize = 10_000;
/// Default horizon in units of the inverse median escape rate.
pub const DEFAULT_HORIZON_UNITS: f64 = 500.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub trajectories: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl SimulationConfig {
    pub fn new(horizon: f64, trajectories: usize, seed: u64) -> Self {
        Self { horizon, trajectories, seed, threads: None }
    }

    fn check(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon {} must be positive", self.horizon)));
        }
        if self.trajectories < 2 {
            return Err(Error::InvalidParameter("at least two trajectories are needed".into()));
        }
        Ok(())
    }
}

/// Sample moments of `N(T)` across trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub horizon: f64,
    pub n_traj: usize,
    pub mean_n: f64,
    pub var_n: f64,
    pub f_hat: f64,
    pub d_hat: f64,
    pub se_f: f64,
    pub se_d: f64,
    pub s_hat: f64,
    /// Delta-method error of `F̂²/D̂`, neglecting the `F̂`–`D̂` covariance.
    pub se_s: f64,
    pub seed: u64,
}

impl TrajectoryStats {
    pub fn from_samples(samples: &[f64], horizon: f64, seed: u64) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let (mut m2, mut m4) = (0.0, 0.0);
        for x in samples {
            let d = x - mean;
            m2 += d * d;
            m4 += d * d * d * d;
        }
        let var = m2 / (n - 1.0);
        let mu2 = m2 / n;
        let mu4 = m4 / n;
        let se_mean = (var / n).sqrt();
        // Var(s²) ≈ (μ₄ - (n-3)/(n-1) σ⁴)/n
        let var_of_var = ((mu4 - (n - 3.0) / (n - 1.0) * mu2 * mu2) / n).max(0.0);
        let f_hat = mean / horizon;
        let d_hat = var / horizon;
        let se_f = se_mean / horizon;
        let se_d = var_of_var.sqrt() / horizon;
        let (s_hat, se_s) = if d_hat > 0.0 {
            let s = f_hat * f_hat / d_hat;
            let rel_f = if f_hat != 0.0 { se_f / f_hat } else { 0.0 };
            let rel = (4.0 * rel_f * rel_f + (se_d / d_hat).powi(2)).sqrt();
            (s, s * rel)
        } else {
            (0.0, 0.0)
        };
        Self {
            horizon,
            n_traj: samples.len(),
            mean_n: mean,
            var_n: var,
            f_hat,
            d_hat,
            se_f,
            se_d,
            s_hat,
            se_s,
            seed,
        }
    }

    /// `|F̂ - F| ≤ k se_F` and `|D̂ - D| ≤ k se_D`.
    pub fn agrees_with(&self, f: f64, d: f64, k: f64) -> bool {
        (self.f_hat - f).abs() <= k * self.se_f && (self.d_hat - d).abs() <= k * self.se_d
    }
}

/// Independent generator for trajectory `index` under `seed`.
pub fn rng_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn run_indexed<F>(cfg: &SimulationConfig, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let work = || (0..cfg.trajectories).into_par_iter().map(&f).collect::<Result<Vec<f64>>>();
        match cfg.threads {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
                .install(work),
            None => work(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..cfg.trajectories).map(f).collect()
    }
}

fn sample_index(rng: &mut ChaCha8Rng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().unwrap_or(&0.0);
    let u = rng.random::<f64>() * total;
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
}

fn cumulative(weights: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .into_iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Outgoing transitions of each state: `(to, rate, weight)`.
struct Gillespie {
    outgoing: Vec<Vec<(usize, f64, f64)>>,
    cumulative: Vec<Vec<f64>>,
    escape: Vec<f64>,
    initial: Vec<f64>,
}

impl Gillespie {
    fn new(spec: &ClassicalClockworkSpec, weights: &[f64]) -> Result<Self> {
        let transitions = spec.transitions();
        if weights.len() != transitions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} transitions",
                weights.len(),
                transitions.len()
            )));
        }
        let n = spec.num_states();
        let mut outgoing = vec![Vec::new(); n];
        for (&(from, to, rate), &w) in transitions.iter().zip(weights) {
            outgoing[from].push((to, rate, w));
        }
        let cumulative_rates = outgoing.iter().map(|o| cumulative(o.iter().map(|t| t.1))).collect();
        let p = ClassicalFcs::new(spec)?.steady_state().clone();
        Ok(Self {
            escape: spec.escape_rates(),
            outgoing,
            cumulative: cumulative_rates,
            initial: cumulative(p.iter().map(|x| x.max(0.0))),
        })
    }

    fn run(&self, horizon: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut state = sample_index(rng, &self.initial);
        let mut t = 0.0;
        let mut count = 0.0;
        loop {
            let g = self.escape[state];
            if g <= 0.0 {
                return Err(Error::Absorbing { state });
            }
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / g;
            if t > horizon {
                return Ok(count);
            }
            let k = sample_index(rng, &self.cumulative[state]);
            let (to, _, w) = self.outgoing[state][k];
            count += w;
            state = to;
        }
    }
}

/// Gillespie estimate for per-transition weights (see
/// [`ClassicalClockworkSpec::transitions`]), started in the steady state.
pub fn simulate_classical(spec: &ClassicalClockworkSpec, weights: &[f64], cfg: &SimulationConfig) -> Result<TrajectoryStats> {
    cfg.check()?;
    let sim = Gillespie::new(spec, weights)?;
    let samples = run_indexed(cfg, |i| sim.run(cfg.horizon, &mut rng_stream(cfg.seed, i as u64)))?;
    Ok(TrajectoryStats::from_samples(&samples, cfg.horizon, cfg.seed))
}

/// Gillespie estimate on the joint chain of classical clockworks and memory.
pub fn simulate_classical_feedback(
    chain: &ClassicalFeedbackChain,
    current: &IntegratedCurrent,
    cfg: &SimulationConfig,
) -> Result<TrajectoryStats> {
    simulate_classical(&chain.spec, &chain.weights(current)?, cfg)
}

/// `500 / median Γ_l` over states with non-zero escape rate.
pub fn default_horizon_classical(spec: &ClassicalClockworkSpec) -> Result<f64> {
    median_horizon(spec.escape_rates())
}

fn median_horizon(mut rates: Vec<f64>) -> Result<f64> {
    rates.retain(|r| *r > 1e-12);
    if rates.is_empty() {
        return Err(Error::InvalidParameter("system has no jumps".into()));
    }
    rates.sort_by(f64::total_cmp);
    let k = rates.len();
    let median = if k % 2 == 1 { rates[k / 2] } else { 0.5 * (rates[k / 2 - 1] + rates[k / 2]) };
    Ok(DEFAULT_HORIZON_UNITS / median)
}

#[derive(Clone, Debug)]
struct QuantumJump {
    label: JumpLabel,
    op: ComplexMatrix,
    next: usize,
    weight: f64,
}

#[derive(Clone, Debug)]
struct QuantumBlock {
    h_eff: ComplexMatrix,
    jumps: Vec<QuantumJump>,
    /// `exp(-i H_eff h / 2^k)` for `k = 0..=BISECTION_LEVELS`.
    propagators: Vec<ComplexMatrix>,
}

/// Clockwork dynamics conditioned on each memory state, ready for
/// quantum-jump sampling.
#[derive(Clone, Debug)]
pub struct QuantumSystem {
    blocks: Vec<QuantumBlock>,
    step: f64,
    /// `(memory, pure state)` components of the steady state with cumulative
    /// probabilities.
    initial: Vec<(usize, ComplexVector)>,
    initial_cumulative: Vec<f64>,
    escape_rates: Vec<f64>,
}

/// One jump of a sampled trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub label: JumpLabel,
    pub memory_before: usize,
    pub memory_after: usize,
    /// Norm of the post-jump state after renormalization.
    pub norm: f64,
}

impl QuantumSystem {
    /// A spec without memory.
    pub fn from_spec(spec: &LindbladSpec, current: &IntegratedCurrent) -> Result<Self> {
        let labels: Vec<JumpLabel> = spec.labels().collect();
        current.validate(&labels)?;
        let jumps = spec
            .jumps()
            .iter()
            .map(|j| QuantumJump { label: j.label, op: j.op.clone(), next: 0, weight: current.weight_for(j.label) })
            .collect();
        let rho = FcsSolver::new(spec)?.steady_state().clone();
        Self::assemble(vec![(spec.hamiltonian().clone(), jumps)], &[rho])
    }

    /// A spec without memory, started from a given pure state instead of
    /// the steady state. Works for generators without a unique steady state.
    pub fn from_spec_with_initial(spec: &LindbladSpec, current: &IntegratedCurrent, psi: &ComplexVector) -> Result<Self> {
        let labels: Vec<JumpLabel> = spec.labels().collect();
        current.validate(&labels)?;
        if psi.len() != spec.dim() {
            return Err(Error::DimensionMismatch(format!("initial state has length {}, expected {}", psi.len(), spec.dim())));
        }
        let n = psi.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidParameter("initial state must have finite non-zero norm".into()));
        }
        let jumps = spec
            .jumps()
            .iter()
            .map(|j| QuantumJump { label: j.label, op: j.op.clone(), next: 0, weight: current.weight_for(j.label) })
            .collect();
        let psi = psi / re(n);
        Self::assemble(vec![(spec.hamiltonian().clone(), jumps)], &[&psi * psi.adjoint()])
    }

    /// Joint clockworks + memory system, simulated block by block.
    pub fn from_joint(joint: &JointSystem, current: &IntegratedCurrent) -> Result<Self> {
        let labels: Vec<JumpLabel> = joint.spec.labels().collect();
        current.validate(&labels)?;
        let rho = FcsSolver::new(&joint.spec)?.steady_state().clone();
        let mdim = joint.memory_dim;
        let cdim = joint.clockwork_dim();
        let mut parts = Vec::with_capacity(mdim);
        let mut rhos = Vec::with_capacity(mdim);
        for (m, block) in joint.blocks.iter().enumerate() {
            let jumps = block
                .jumps
                .iter()
                .map(|bj| QuantumJump { label: bj.label, op: bj.op.clone(), next: bj.next, weight: current.weight_for(bj.label) })
                .collect();
            parts.push((block.hamiltonian.clone(), jumps));
            rhos.push(ComplexMatrix::from_fn(cdim, cdim, |r, c| rho[(joint.index(r, m), joint.index(c, m))]));
        }
        Self::assemble(parts, &rhos)
    }

    fn assemble(parts: Vec<(ComplexMatrix, Vec<QuantumJump>)>, rhos: &[ComplexMatrix]) -> Result<Self> {
        let dim = parts[0].0.nrows();
        let mut lambda_max: f64 = 0.0;
        let mut escape_rates = Vec::new();
        let mut decays = Vec::with_capacity(parts.len());
        for (_, jumps) in &parts {
            let mut k = ComplexMatrix::zeros(dim, dim);
            for j in jumps {
                k += j.op.adjoint() * &j.op;
            }
            let eig = k.clone().symmetric_eigen();
            for &e in eig.eigenvalues.iter() {
                lambda_max = lambda_max.max(e);
                escape_rates.push(e);
            }
            decays.push(k);
        }
        let step = if lambda_max > 0.0 { 1.0 / lambda_max } else { 1.0 };
        let mut blocks = Vec::with_capacity(parts.len());
        for ((h, jumps), k) in parts.into_iter().zip(decays) {
            let h_eff = h - k * c(0.0, 0.5);
            let propagators = (0..=BISECTION_LEVELS)
                .map(|lvl| (&h_eff * c(0.0, -step / 2f64.powi(lvl as i32))).exp())
                .collect();
            blocks.push(QuantumBlock { h_eff, jumps, propagators });
        }
        let mut initial = Vec::new();
        let mut probs = Vec::new();
        for (m, rho_m) in rhos.iter().enumerate() {
            let herm = (rho_m + rho_m.adjoint()) * re(0.5);
            let eig = herm.symmetric_eigen();
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam > EIGEN_CUTOFF {
                    let v: ComplexVector = eig.eigenvectors.column(k).into_owned();
                    let n = v.norm();
                    initial.push((m, v / re(n)));
                    probs.push(lam);
                }
            }
        }
        if initial.is_empty() {
            return Err(Error::NonPositive { value: 0.0 });
        }
        Ok(Self { blocks, step, initial, initial_cumulative: cumulative(probs), escape_rates })
    }

    pub fn memory_states(&self) -> usize {
        self.blocks.len()
    }

    /// `500 / median` of the non-zero eigenvalues of `Σ J†J` over memory
    /// blocks.
    pub fn default_horizon(&self) -> Result<f64> {
        median_horizon(self.escape_rates.clone())
    }

    fn run(&self, horizon: f64, rng: &mut ChaCha8Rng, mut record: Option<&mut Vec<JumpEvent>>) -> Result<f64> {
        let (mut m, psi0) = {
            let k = sample_index(rng, &self.initial_cumulative);
            (self.initial[k].0, self.initial[k].1.clone())
        };
        let mut psi = psi0;
        let mut t = 0.0;
        let mut count = 0.0;
        let mut threshold: f64 = rng.random();
        loop {
            let block = &self.blocks[m];
            // advance without jumping as far as possible
            let mut jumped = false;
            if t + self.step <= horizon {
                let cand = &block.propagators[0] * &psi;
                if cand.norm_squared() > threshold {
                    psi = cand;
                    t += self.step;
                    continue;
                }
                jumped = true;
                for lvl in 1..=BISECTION_LEVELS {
                    let cand = &block.propagators[lvl] * &psi;
                    if cand.norm_squared() > threshold {
                        psi = cand;
                        t += self.step / 2f64.powi(lvl as i32);
                    }
                }
            } else {
                for lvl in 1..=BISECTION_LEVELS {
                    let dt = self.step / 2f64.powi(lvl as i32);
                    if t + dt > horizon {
                        continue;
                    }
                    let cand = &block.propagators[lvl] * &psi;
                    if cand.norm_squared() > threshold {
                        psi = cand;
                        t += dt;
                    } else {
                        jumped = true;
                    }
                }
            }
            if !jumped {
                return Ok(count);
            }
            let norm = psi.norm();
            if norm < 1e-150 {
                return Err(Error::NormCollapse { norm });
            }
            psi /= re(norm);
            let outcomes: Vec<ComplexVector> = block.jumps.iter().map(|j| &j.op * &psi).collect();
            let cum = cumulative(outcomes.iter().map(DVector::norm_squared));
            if *cum.last().unwrap_or(&0.0) <= 0.0 {
                return Err(Error::NormCollapse { norm });
            }
            let k = sample_index(rng, &cum);
            let jump = &block.jumps[k];
            let after = &outcomes[k];
            psi = after / re(after.norm());
            count += jump.weight;
            if let Some(rec) = record.as_deref_mut() {
                rec.push(JumpEvent { time: t, label: jump.label, memory_before: m, memory_after: jump.next, norm: psi.norm() });
            }
            m = jump.next;
            threshold = rng.random();
        }
    }

    /// Jump record of trajectory `index`, as used by [`simulate_quantum`].
    pub fn sample_trajectory(&self, horizon: f64, seed: u64, index: u64) -> Result<Vec<JumpEvent>> {
        let mut events = Vec::new();
        self.run(horizon, &mut rng_stream(seed, index), Some(&mut events))?;
        Ok(events)
    }

    pub fn h_eff(&self, memory: usize) -> &ComplexMatrix {
        &self.blocks[memory].h_eff
    }
}

/// Quantum-jump estimate of `F` and `D`.
pub fn simulate_quantum(system: &QuantumSystem, cfg: &SimulationConfig) -> Result<TrajectoryStats> {
    cfg.check()?;
    let samples = run_indexed(cfg, |i| system.run(cfg.horizon, &mut rng_stream(cfg.seed, i as u64), None))?;
    Ok(TrajectoryStats::from_samples(&samples, cfg.horizon, cfg.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{classical_to_lindblad, qubit_clockwork};

    #[test]
    fn sample_moments() {
        let s = TrajectoryStats::from_samples(&[1.0, 2.0, 3.0, 4.0], 2.0, 0);
        assert_eq!(s.mean_n, 2.5);
        assert!((s.var_n - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.f_hat, 1.25);
    }

    #[test]
    fn zero_weight_current_is_exactly_zero() {
        let spec = ClassicalClockworkSpec::ring(&[1.0, 1.0]).unwrap();
        let st = simulate_classical(&spec, &[0.0, 0.0], &SimulationConfig::new(50.0, 100, 3)).unwrap();
        assert_eq!((st.mean_n, st.var_n), (0.0, 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        let spec = ClassicalClockworkSpec::ring(&[1.0, 1.0]).unwrap();
        assert!(simulate_classical(&spec, &[1.0, 1.0], &SimulationConfig::new(0.0, 100, 3)).is_err());
        assert!(simulate_classical(&spec, &[1.0, 1.0], &SimulationConfig::new(1.0, 1, 3)).is_err());
    }

    #[test]
    fn absorbing_state_is_an_error() {
        let spec = ClassicalClockworkSpec::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            simulate_classical(&spec, &[1.0], &SimulationConfig::new(10.0, 10, 1)),
            Err(Error::Absorbing { .. })
        ));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let spec = ClassicalClockworkSpec::ring(&[1.0, 2.0, 0.5]).unwrap();
        let mut cfg = SimulationConfig::new(30.0, 200, 9);
        cfg.threads = Some(1);
        let a = simulate_classical(&spec, &[1.0, 0.5, 2.0], &cfg).unwrap();
        cfg.threads = Some(4);
        let b = simulate_classical(&spec, &[1.0, 0.5, 2.0], &cfg).unwrap();
        assert_eq!(a, b);

        let q = qubit_clockwork(0.84, 3.6, 1.0).unwrap();
        let sys = QuantumSystem::from_spec(&q, &IntegratedCurrent::total_count(q.labels())).unwrap();
        cfg.threads = Some(1);
        let a = simulate_quantum(&sys, &cfg).unwrap();
        cfg.threads = Some(3);
        assert_eq!(a, simulate_quantum(&sys, &cfg).unwrap());
    }

    #[test]
    fn quantum_route_on_classical_chain() {
        let chain = ClassicalClockworkSpec::ring(&[1.0, 1.0]).unwrap();
        let spec = classical_to_lindblad(&chain);
        let sys = QuantumSystem::from_spec(&spec, &IntegratedCurrent::total_count(spec.labels())).unwrap();
        let st = simulate_quantum(&sys, &SimulationConfig::new(200.0, 2000, 5)).unwrap();
        assert!(st.agrees_with(1.0, 1.0, 4.0), "{st:?}");
    }

    #[test]
    fn default_horizons() {
        let spec = ClassicalClockworkSpec::ring(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(default_horizon_classical(&spec).unwrap(), 250.0);
        let q = qubit_clockwork(0.84, 3.6, 2.0).unwrap();
        let sys = QuantumSystem::from_spec(&q, &IntegratedCurrent::new()).unwrap();
        assert!((sys.default_horizon().unwrap() - 250.0).abs() < 1e-9);
    }
}
