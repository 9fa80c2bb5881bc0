//! Grid sweeps, Nelder–Mead refinement and the constant-vs-feedback
//! comparison.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcs::{optimal_combination, ClassicalFcs, FcsResult, FcsSolver, IntegratedCurrent};
use crate::feedback::{build_joint, classical_feedback_rate_matrix, two_qubit_switching_policy, FeedbackPolicy};
use crate::model::{compose_independent, qubit_clockwork, JumpLabel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Periodic axes exclude `max` from the grid and wrap during refinement.
    #[serde(default)]
    pub periodic: bool,
}

impl Axis {
    pub fn new(name: &str, min: f64, max: f64, points: usize) -> Self {
        Self { name: name.into(), min, max, points, periodic: false }
    }

    pub fn periodic(name: &str, min: f64, max: f64, points: usize) -> Self {
        Self { periodic: true, ..Self::new(name, min, max, points) }
    }

    fn check(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidParameter(format!("axis {} has non-finite bounds", self.name)));
        }
        match self.points {
            0 => Err(Error::InvalidParameter(format!("axis {} has no points", self.name))),
            1 if self.min != self.max => Err(Error::InvalidParameter(format!(
                "single-point axis {} needs min == max",
                self.name
            ))),
            1 => Ok(()),
            _ if self.min >= self.max => Err(Error::InvalidParameter(format!("axis {} needs min < max", self.name))),
            _ => Ok(()),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let span = self.max - self.min;
        let div = if self.periodic { self.points } else { self.points - 1 } as f64;
        (0..self.points).map(|k| self.min + span * k as f64 / div).collect()
    }

    fn bound(&self) -> Bound {
        Bound { min: self.min, max: self.max, periodic: self.periodic }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub periodic: bool,
}

impl Bound {
    fn apply(&self, x: f64) -> f64 {
        if self.periodic {
            let span = self.max - self.min;
            if span <= 0.0 {
                return self.min;
            }
            self.min + (x - self.min).rem_euclid(span)
        } else {
            x.clamp(self.min, self.max)
        }
    }
}

/// Cartesian product of axes in lexicographic order (last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axes: Vec<Axis>,
}

impl SweepGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one axis".into()));
        }
        for a in &axes {
            a.check()?;
        }
        Ok(Self { axes })
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut out = vec![Vec::new()];
        for vals in &values {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn bounds(&self) -> Vec<Bound> {
        self.axes.iter().map(Axis::bound).collect()
    }
}

/// Objective value at one parameter point. Degenerate points carry a flag
/// and report `S = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub f: f64,
    pub d: f64,
    pub s: f64,
    pub flag: Option<String>,
}

impl From<&FcsResult> for Evaluation {
    fn from(r: &FcsResult) -> Self {
        match r.degeneracy {
            Some(deg) => Self { f: r.f, d: r.d, s: 0.0, flag: Some(deg.as_str().into()) },
            None => Self { f: r.f, d: r.d, s: r.s, flag: None },
        }
    }
}

/// Named evaluators used by the CLI and the comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Total-count SNR of the qubit clockwork at `(E, φ)`.
    QubitSnr { gamma: f64 },
    /// Total-count SNR of the two-qubit switching policy at `(α₁, α₂)`.
    TwoQubitFeedback { e_star: f64, phi_star: f64, gamma: f64 },
}

impl Objective {
    pub fn dimension(&self) -> usize {
        2
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<Evaluation> {
        if p.len() != self.dimension() {
            return Err(Error::DimensionMismatch(format!("objective takes {} parameters", self.dimension())));
        }
        match *self {
            Objective::QubitSnr { gamma } => {
                let spec = qubit_clockwork(p[0], p[1], gamma)?;
                let cur = IntegratedCurrent::total_count(spec.labels());
                Ok((&FcsSolver::new(&spec)?.evaluate(&cur)?).into())
            }
            Objective::TwoQubitFeedback { e_star, phi_star, gamma } => {
                let (fams, policy) = two_qubit_switching_policy(p[0], p[1], e_star, phi_star, gamma)?;
                let joint = build_joint(&fams, &policy)?;
                let cur = IntegratedCurrent::total_count(policy.alphabet().iter().copied());
                Ok((&FcsSolver::new(&joint.spec)?.evaluate(&cur)?).into())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: Vec<f64>,
    pub f: f64,
    pub d: f64,
    pub s: f64,
    pub flag: Option<String>,
}

/// Evaluates every grid point; failures become flagged rows.
pub fn sweep_with<F>(grid: &SweepGrid, objective: F) -> Vec<SweepRow>
where
    F: Fn(&[f64]) -> Result<Evaluation> + Sync,
{
    let points = grid.points();
    let eval = |p: &Vec<f64>| -> SweepRow {
        match objective(p) {
            Ok(e) => SweepRow { params: p.clone(), f: e.f, d: e.d, s: e.s, flag: e.flag },
            Err(err) => SweepRow { params: p.clone(), f: 0.0, d: 0.0, s: 0.0, flag: Some(format!("error: {err}")) },
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(eval).collect()
    }
}

pub fn sweep(grid: &SweepGrid, objective: &Objective) -> Vec<SweepRow> {
    sweep_with(grid, |p| objective.evaluate(p))
}

/// Best unflagged row, earliest on ties.
pub fn grid_best(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter()
        .filter(|r| r.flag.is_none() && r.s.is_finite())
        .fold(None, |best: Option<&SweepRow>, r| match best {
            Some(b) if b.s >= r.s => Some(b),
            _ => Some(r),
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub evaluation: usize,
    pub params: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub grid_argmax: Option<Vec<f64>>,
    pub grid_value: Option<f64>,
    pub evaluations: usize,
    /// Strict improvements of the best value, in evaluation order.
    pub refinement_trace: Vec<TraceEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineOptions {
    /// Stop when the simplex diameter falls below this.
    pub tolerance: f64,
    pub max_evaluations: usize,
    /// Initial simplex edge as a fraction of each axis span.
    pub initial_step: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { tolerance: 1e-4, max_evaluations: 500, initial_step: 0.05 }
    }
}

/// Nelder–Mead maximization. Non-periodic coordinates are clamped into their
/// bounds; periodic coordinates are kept unwrapped inside the simplex and
/// wrapped only when the objective is called.
pub fn refine<F>(start: &[f64], bounds: &[Bound], objective: F, opts: RefineOptions) -> Result<OptimumReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = start.len();
    if bounds.len() != n || n == 0 {
        return Err(Error::DimensionMismatch(format!("{} bounds for {} parameters", bounds.len(), n)));
    }
    for (x, b) in start.iter().zip(bounds) {
        if b.min > b.max || !(b.periodic || (*x >= b.min && *x <= b.max)) {
            return Err(Error::InvalidParameter(format!("start {start:?} is outside the bounds")));
        }
    }
    let clamp = |x: &mut Vec<f64>| {
        for (v, b) in x.iter_mut().zip(bounds) {
            if !b.periodic {
                *v = b.apply(*v);
            }
        }
    };
    let wrap = |x: &[f64]| -> Vec<f64> { x.iter().zip(bounds).map(|(v, b)| b.apply(*v)).collect() };

    let mut evaluations = 0usize;
    let mut trace = Vec::new();
    let start_value = objective(&wrap(start))
        .map_err(|e| Error::Objective(format!("objective failed at the start point: {e}")))?;
    if !start_value.is_finite() {
        return Err(Error::Objective(format!("objective is {start_value} at the start point")));
    }
    evaluations += 1;
    let mut best = (start.to_vec(), start_value);

    let eval = |x: &[f64], evaluations: &mut usize, best: &mut (Vec<f64>, f64), trace: &mut Vec<TraceEntry>| -> f64 {
        *evaluations += 1;
        let v = match objective(&wrap(x)) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        };
        if v > best.1 {
            *best = (x.to_vec(), v);
            trace.push(TraceEntry { evaluation: *evaluations, params: wrap(x), value: v });
        }
        v
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), start_value)];
    for i in 0..n {
        let span = bounds[i].max - bounds[i].min;
        let mut x = start.to_vec();
        let step = opts.initial_step * span;
        x[i] += step;
        if !bounds[i].periodic && x[i] > bounds[i].max {
            x[i] = start[i] - step;
        }
        clamp(&mut x);
        let v = if x == start { start_value } else { eval(&x, &mut evaluations, &mut best, &mut trace) };
        simplex.push((x, v));
    }

    let diameter = |s: &[(Vec<f64>, f64)]| -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let dist = s[i].0.iter().zip(&s[j].0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                d = d.max(dist);
            }
        }
        d
    };

    while diameter(&simplex) >= opts.tolerance && evaluations < opts.max_evaluations {
        // descending by value
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|p| p.0[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect();
            clamp(&mut x);
            x
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evaluations, &mut best, &mut trace);
        if fr > simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evaluations, &mut best, &mut trace);
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr > worst.1 {
            let x = along(0.5);
            let f = eval(&x, &mut evaluations, &mut best, &mut trace);
            (x, f)
        } else {
            let x = along(-0.5);
            let f = eval(&x, &mut evaluations, &mut best, &mut trace);
            (x, f)
        };
        let accept = if fr > worst.1 { fc >= fr } else { fc > worst.1 };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let top = simplex[0].0.clone();
        for p in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = top.iter().zip(&p.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            clamp(&mut x);
            let f = eval(&x, &mut evaluations, &mut best, &mut trace);
            *p = (x, f);
        }
    }

    Ok(OptimumReport {
        argmax: wrap(&best.0),
        value: best.1,
        grid_argmax: None,
        grid_value: None,
        evaluations,
        refinement_trace: trace,
    })
}

fn objective_value(objective: &Objective, p: &[f64]) -> Result<f64> {
    let e = objective.evaluate(p)?;
    Ok(if e.flag.is_some() { 0.0 } else { e.s })
}

/// Sweep, then refine from the best grid point.
pub fn optimize(grid: &SweepGrid, objective: &Objective, opts: RefineOptions) -> Result<(Vec<SweepRow>, OptimumReport)> {
    let rows = sweep(grid, objective);
    let best = grid_best(&rows)
        .ok_or_else(|| Error::Objective("no grid point produced a finite SNR".into()))?
        .clone();
    let mut report = refine(&best.params, &grid.bounds(), |p| objective_value(objective, p), opts)?;
    report.grid_argmax = Some(best.params);
    report.grid_value = Some(best.s);
    Ok((rows, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub gamma: f64,
    /// Start of the single-clockwork refinement `(E, φ)`.
    pub qubit_start: [f64; 2],
    pub energy_bounds: [f64; 2],
    pub alpha_start: [f64; 2],
    pub alpha1_bounds: [f64; 2],
    pub alpha2_bounds: [f64; 2],
    pub refine: RefineOptions,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            qubit_start: [1.0, PI],
            energy_bounds: [0.05, 3.0],
            alpha_start: [1.0, 1.0],
            alpha1_bounds: [0.5, 1.5],
            alpha2_bounds: [0.5, 1.5],
            refine: RefineOptions { tolerance: 1e-6, ..RefineOptions::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub e_star: f64,
    pub phi_star: f64,
    pub single_snr: f64,
    /// Best SNR of two independent optimal clockworks, `2S*`.
    pub ceiling: f64,
    /// Relative deviation of the composed `F` and `D` from the component sums.
    pub additivity_f: f64,
    pub additivity_d: f64,
    pub feedback_argmax: Vec<f64>,
    pub feedback_snr: f64,
    pub ratio: f64,
    pub advantage: bool,
    pub single: OptimumReport,
    pub feedback: OptimumReport,
}

pub const ADVANTAGE_MARGIN: f64 = 1e-3;

/// Two-qubit constant ceiling against the optimized switching policy.
pub fn compare_constant_vs_feedback(cfg: &CompareConfig) -> Result<CompareReport> {
    let qubit = Objective::QubitSnr { gamma: cfg.gamma };
    let qb = [
        Bound { min: cfg.energy_bounds[0] * cfg.gamma, max: cfg.energy_bounds[1] * cfg.gamma, periodic: false },
        Bound { min: 0.0, max: 2.0 * PI, periodic: true },
    ];
    let single = refine(&cfg.qubit_start, &qb, |p| objective_value(&qubit, p), cfg.refine)?;
    let (e_star, phi_star) = (single.argmax[0], single.argmax[1]);

    let one = qubit_clockwork(e_star, phi_star, cfg.gamma)?;
    let r1 = FcsSolver::new(&one)?.evaluate(&IntegratedCurrent::total_count(one.labels()))?;
    let pair = compose_independent(&[one.clone(), one])?;
    let r2 = FcsSolver::new(&pair)?.evaluate(&IntegratedCurrent::total_count(pair.labels()))?;
    let additivity_f = (r2.f - 2.0 * r1.f).abs() / (2.0 * r1.f).abs();
    let additivity_d = (r2.d - 2.0 * r1.d).abs() / (2.0 * r1.d).abs();
    let ceiling = optimal_combination(&[(r1.f, r1.d), (r1.f, r1.d)])?.snr;

    let fb = Objective::TwoQubitFeedback { e_star, phi_star, gamma: cfg.gamma };
    let fbounds = [
        Bound { min: cfg.alpha1_bounds[0], max: cfg.alpha1_bounds[1], periodic: false },
        Bound { min: cfg.alpha2_bounds[0], max: cfg.alpha2_bounds[1], periodic: false },
    ];
    let feedback = refine(&cfg.alpha_start, &fbounds, |p| objective_value(&fb, p), cfg.refine)?;
    let ratio = feedback.value / ceiling;
    Ok(CompareReport {
        e_star,
        phi_star,
        single_snr: single.value,
        ceiling,
        additivity_f,
        additivity_d,
        feedback_argmax: feedback.argmax.clone(),
        feedback_snr: feedback.value,
        ratio,
        advantage: ratio > 1.0 + ADVANTAGE_MARGIN,
        single,
        feedback,
    })
}

/// Two two-state classical clockworks; the memory remembers which one ticked
/// last. In memory `m`, clockwork `m+1` runs at rates `p[0..2]` and the other
/// at `p[2..4]`.
pub fn classical_switching_policy(p: &[f64]) -> Result<FeedbackPolicy> {
    if p.len() != 4 {
        return Err(Error::DimensionMismatch("classical switching policy takes four rates".into()));
    }
    let alphabet: Vec<JumpLabel> = (1..=2).flat_map(|a| (0..2).map(move |j| JumpLabel::new(a, j))).collect();
    FeedbackPolicy::from_fn(
        2,
        alphabet,
        2,
        |_, l| l.clockwork - 1,
        |m, a| if a - 1 == m { p[0..2].to_vec() } else { p[2..4].to_vec() },
    )
}

/// Best SNR over all currents of a classical chain, `1/τ`.
pub fn classical_switching_snr(p: &[f64]) -> Result<f64> {
    let policy = classical_switching_policy(p)?;
    let chain = classical_feedback_rate_matrix(&[2, 2], &policy)?;
    Ok(1.0 / ClassicalFcs::new(&chain.spec)?.residual_time()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalCompareReport {
    pub ceiling: f64,
    pub feedback_argmax: Vec<f64>,
    pub feedback_snr: f64,
    pub ratio: f64,
    pub advantage: bool,
}

/// Classical analogue: the constant ceiling is `2·hi`, attained with every
/// rate at the top of `[lo, hi]`.
pub fn compare_classical(lo: f64, hi: f64, start: &[f64], opts: RefineOptions) -> Result<ClassicalCompareReport> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidParameter(format!("rate range [{lo}, {hi}] is invalid")));
    }
    let bounds = [Bound { min: lo, max: hi, periodic: false }; 4];
    let rep = refine(start, &bounds, classical_switching_snr, opts)?;
    let ceiling = 2.0 * hi;
    let ratio = rep.value / ceiling;
    Ok(ClassicalCompareReport {
        ceiling,
        feedback_argmax: rep.argmax,
        feedback_snr: rep.value,
        ratio,
        advantage: ratio > 1.0 + ADVANTAGE_MARGIN,
    })
}
