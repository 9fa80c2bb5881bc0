//! Model, feedback and counting-statistics behaviour on concrete systems.

mod common;

use std::f64::consts::PI;

use clockfcs::fcs::{
    corollary1_construction, optimal_combination, theorem1_bound, ClassicalFcs, FcsSolver,
};
use clockfcs::feedback::{
    build_joint, classical_feedback_rate_matrix, constant_policy, protocol1_policy, ring_families,
    two_qubit_switching_policy,
};
use clockfcs::linalg::{self, c, re};
use clockfcs::model::{
    classical_to_lindblad, compose_independent, qubit_clockwork, ring_clockwork, Coordinate, Jump,
};
use clockfcs::{current_and_noise, ClassicalClockworkSpec, ComplexMatrix, ControlledFamily, IntegratedCurrent, JumpLabel, LindbladSpec};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn total(spec: &LindbladSpec) -> IntegratedCurrent {
    IntegratedCurrent::total_count(spec.labels())
}

#[test]
fn qubit_near_reported_optimum() {
    let spec = qubit_clockwork(0.84, 1.15 * PI, 1.0).unwrap();
    let r = current_and_noise(&spec, &total(&spec)).unwrap();
    assert!((r.s - 1.19).abs() < 0.01);
    let rho = r.steady_state;
    assert!((rho.trace().re - 1.0).abs() < 1e-12);
}

#[test]
fn two_state_steady_state_by_detailed_balance() {
    let spec = classical_to_lindblad(&ClassicalClockworkSpec::ring(&[1.0, 2.0]).unwrap());
    let rho = clockfcs::steady_state(&spec).unwrap();
    assert!((rho[(0, 0)].re - 2.0 / 3.0).abs() < 1e-12);
    assert!(rho[(0, 1)].norm() < 1e-14);
}

#[test]
fn composed_steady_state_is_product() {
    let a = qubit_clockwork(0.6, 2.0, 1.0).unwrap();
    let b = classical_to_lindblad(&ClassicalClockworkSpec::ring(&[1.0, 3.0, 0.5]).unwrap());
    let ab = compose_independent(&[a.clone(), b.clone()]).unwrap();
    let rho = clockfcs::steady_state(&ab).unwrap();
    let prod = linalg::kron(&clockfcs::steady_state(&a).unwrap(), &clockfcs::steady_state(&b).unwrap()).unwrap();
    assert!((rho - prod).norm() < 1e-10);
}

#[test]
fn composed_generator_is_kronecker_sum() {
    let a = qubit_clockwork(0.6, 2.0, 1.0).unwrap();
    let b = classical_to_lindblad(&ClassicalClockworkSpec::ring(&[1.0, 3.0]).unwrap());
    let ab = compose_independent(&[a.clone(), b.clone()]).unwrap();
    let la = clockfcs::vectorized_generator(&a);
    let lb = clockfcs::vectorized_generator(&b);
    // column stacking of X_A ⊗ X_B is a permutation of vec(X_A) ⊗ vec(X_B)
    let (na, nb) = (a.dim(), b.dim());
    let n = na * nb;
    let mut perm = ComplexMatrix::zeros(n * n, n * n);
    for i1 in 0..na {
        for j1 in 0..na {
            for i2 in 0..nb {
                for j2 in 0..nb {
                    let from = (j1 * na + i1) * nb * nb + (j2 * nb + i2);
                    let to = (j1 * nb + j2) * n + (i1 * nb + i2);
                    perm[(to, from)] = re(1.0);
                }
            }
        }
    }
    let sum = linalg::kron(&la, &ComplexMatrix::identity(nb * nb, nb * nb)).unwrap()
        + linalg::kron(&ComplexMatrix::identity(na * na, na * na), &lb).unwrap();
    let expected = &perm * sum * perm.transpose();
    assert!((clockfcs::vectorized_generator(&ab) - expected).norm() < 1e-12);
}

#[test]
fn classical_evolution_stays_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let d = rng.random_range(2..=5);
        let spec = classical_to_lindblad(&random_chain(&mut rng, d));
        let l = clockfcs::vectorized_generator(&spec);
        let mut rho = ComplexMatrix::zeros(d, d);
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let sum: f64 = p.iter().sum();
        for i in 0..d {
            rho[(i, i)] = re(p[i] / sum);
        }
        let v0 = linalg::vectorize(&rho).unwrap().into_data();
        for t in [0.3, 1.0, 4.0] {
            let v = (&l * re(t)).exp() * &v0;
            let r = linalg::unvectorize(&linalg::VectorizedOperator::new(v).unwrap());
            for i in 0..d {
                for k in 0..d {
                    if i != k {
                        assert!(r[(i, k)].norm() <= 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn phase_convention_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (e, phi) = (rng.random_range(0.05..3.0), rng.random_range(0.0..2.0 * PI));
        let theta = rng.random_range(0.0..2.0 * PI);
        let spec = qubit_clockwork(e, phi, 1.0).unwrap();
        let shifted = LindbladSpec::new(
            spec.hamiltonian().clone(),
            vec![Jump { label: JumpLabel::new(1, 0), op: &spec.jumps()[0].op * c(theta.cos(), theta.sin()) }],
        )
        .unwrap();
        let a = current_and_noise(&spec, &total(&spec)).unwrap();
        let b = current_and_noise(&shifted, &total(&shifted)).unwrap();
        assert!(rel(a.f, b.f) < 1e-10 && rel(a.d, b.d) < 1e-10 && rel(a.s, b.s) < 1e-10);
    }
}

#[test]
fn two_qubit_no_feedback_point_doubles_single() {
    let (e, phi) = (0.835927, 3.616786);
    let single = qubit_clockwork(e, phi, 1.0).unwrap();
    let s1 = current_and_noise(&single, &total(&single)).unwrap().s;
    let (fams, pol) = two_qubit_switching_policy(1.0, 1.0, e, phi, 1.0).unwrap();
    let joint = build_joint(&fams, &pol).unwrap();
    let r = current_and_noise(&joint.spec, &IntegratedCurrent::total_count(pol.alphabet().iter().copied())).unwrap();
    assert!(rel(r.s, 2.0 * s1) < 1e-9, "{} vs {}", r.s, 2.0 * s1);
    assert!((r.s - 2.38).abs() < 0.01);
}

#[test]
fn two_qubit_reported_feedback_point() {
    let (fams, pol) = two_qubit_switching_policy(1.2, 0.88, 0.835927, 3.616786, 1.0).unwrap();
    let joint = build_joint(&fams, &pol).unwrap();
    let r = current_and_noise(&joint.spec, &IntegratedCurrent::total_count(pol.alphabet().iter().copied())).unwrap();
    assert!((r.s - 2.59).abs() < 0.01, "S = {}", r.s);
}

#[test]
fn each_clockwork_contributes_equally() {
    let (fams, pol) = two_qubit_switching_policy(1.1, 0.9, 0.84, 3.6, 1.0).unwrap();
    let joint = build_joint(&fams, &pol).unwrap();
    let one = IntegratedCurrent::new().with(JumpLabel::new(1, 0), 1.0);
    let two = IntegratedCurrent::new().with(JumpLabel::new(2, 0), 1.0);
    let r1 = current_and_noise(&joint.spec, &one).unwrap();
    let r2 = current_and_noise(&joint.spec, &two).unwrap();
    assert!(rel(r1.s, r2.s) < 1e-9 && rel(r1.f, r2.f) < 1e-9);
}

#[test]
fn constant_policy_is_trivial_memory() {
    let fams = ring_families(&[2, 2], Coordinate::Interval { min: 0.1, max: 5.0 }).unwrap();
    let pol = constant_policy(&fams, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert_eq!(pol.memory_states(), 1);
    assert_eq!(theorem1_bound(&fams, &pol).unwrap(), 2.0);
}

#[test]
fn constant_policy_snr_is_sum_of_parts() {
    let fam = ControlledFamily::qubit(1.0).unwrap();
    let params = [vec![0.84, 3.6], vec![1.3, 0.7]];
    let pol = constant_policy(&[fam.clone(), fam], &params).unwrap();
    let joint = build_joint(&[ControlledFamily::qubit(1.0).unwrap(), ControlledFamily::qubit(1.0).unwrap()], &pol).unwrap();
    let parts: Vec<(f64, f64)> = params
        .iter()
        .map(|p| {
            let s = qubit_clockwork(p[0], p[1], 1.0).unwrap();
            let r = current_and_noise(&s, &total(&s)).unwrap();
            (r.f, r.d)
        })
        .collect();
    let comb = optimal_combination(&parts).unwrap();
    let cur = IntegratedCurrent::new()
        .with(JumpLabel::new(1, 0), comb.coefficients[0])
        .with(JumpLabel::new(2, 0), comb.coefficients[1]);
    let r = current_and_noise(&joint.spec, &cur).unwrap();
    let sum: f64 = parts.iter().map(|(f, d)| f * f / d).sum();
    assert!(rel(r.s, sum) < 1e-9);
    assert!(rel(comb.snr, sum) < 1e-12);
}

#[test]
fn lemma_saturation_against_scan() {
    let a = qubit_clockwork(0.84, 3.6, 1.0).unwrap();
    let b = classical_to_lindblad(&ClassicalClockworkSpec::ring(&[1.0, 2.0]).unwrap());
    let ab = compose_independent(&[a.clone(), b.clone()]).unwrap();
    let ra = current_and_noise(&a, &total(&a)).unwrap();
    let rb = current_and_noise(&b, &total(&b)).unwrap();
    let solver = FcsSolver::new(&ab).unwrap();
    let mut best: f64 = 0.0;
    for k in 0..=4000 {
        let r = -2.0 + 6.0 * k as f64 / 4000.0;
        let cur = IntegratedCurrent::new()
            .with(JumpLabel::new(1, 0), 1.0)
            .with(JumpLabel::new(2, 0), r)
            .with(JumpLabel::new(2, 1), r);
        best = best.max(solver.evaluate(&cur).unwrap().s);
    }
    let comb = optimal_combination(&[(ra.f, ra.d), (rb.f, rb.d)]).unwrap();
    assert!(best <= comb.snr * (1.0 + 1e-12));
    assert!(rel(best, comb.snr) < 1e-6);
    let cur = IntegratedCurrent::new()
        .with(JumpLabel::new(1, 0), 1.0)
        .with(JumpLabel::new(2, 0), comb.r_max[0])
        .with(JumpLabel::new(2, 1), comb.r_max[0]);
    assert!(rel(solver.evaluate(&cur).unwrap().s, ra.s + rb.s) < 1e-8);
}

#[test]
fn theorem1_examples() {
    let fams2 = ring_families(&[2, 2], Coordinate::Interval { min: 0.1, max: 5.0 }).unwrap();
    let pol = constant_policy(&fams2, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    assert_eq!(theorem1_bound(&fams2, &pol).unwrap(), 6.0);

    let cor = corollary1_construction(&fams2, &pol).unwrap();
    assert_eq!(cor.rates, vec![2.0, 4.0]);
    assert_eq!(cor.policy.params(0, 1), &[2.0, 2.0]);
    assert_eq!(cor.policy.params(0, 2), &[4.0, 4.0]);
    let chain = classical_feedback_rate_matrix(&[2, 2], &cor.policy).unwrap();
    let r = chain.fcs().unwrap().evaluate(&chain.weights(&cor.current).unwrap()).unwrap();
    assert!(rel(r.s, 6.0) < 1e-10);

    let fams1 = ring_families(&[2], Coordinate::Interval { min: 0.1, max: 5.0 }).unwrap();
    let pol = clockfcs::FeedbackPolicy::new(
        2,
        vec![JumpLabel::new(1, 0), JumpLabel::new(1, 1)],
        vec![vec![1, 1], vec![0, 0]],
        vec![vec![vec![1.0, 1.0]], vec![vec![5.0, 5.0]]],
    )
    .unwrap();
    assert_eq!(theorem1_bound(&fams1, &pol).unwrap(), 5.0);
}

#[test]
fn corollary_fixed_point() {
    let fams = ring_families(&[2], Coordinate::Interval { min: 0.1, max: 5.0 }).unwrap();
    let pol = constant_policy(&fams, &[vec![3.0, 3.0]]).unwrap();
    let cor = corollary1_construction(&fams, &pol).unwrap();
    assert_eq!(cor.policy, pol);
}

#[test]
fn theorem1_requires_symmetric_two_state_spaces() {
    let fam = ControlledFamily::new(
        clockfcs::model::ControlKind::ClassicalRing { states: 2 },
        clockfcs::model::ParameterSpace(vec![
            Coordinate::Interval { min: 0.1, max: 5.0 },
            Coordinate::Interval { min: 0.1, max: 2.0 },
        ]),
    )
    .unwrap();
    let pol = constant_policy(&[fam.clone()], &[vec![1.0, 1.0]]).unwrap();
    assert!(matches!(theorem1_bound(&[fam], &pol), Err(clockfcs::Error::Precondition(_))));
    let q = ControlledFamily::qubit(1.0).unwrap();
    let pol = constant_policy(&[q.clone()], &[vec![1.0, 1.0]]).unwrap();
    assert!(theorem1_bound(&[q], &pol).is_err());
}

#[test]
fn classical_routes_agree_under_feedback() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let pol = random_ring_policy(&mut rng, 2, 3, 0.1, 5.0);
        let chain = classical_feedback_rate_matrix(&[2, 2], &pol).unwrap();
        let Ok(fast) = ClassicalFcs::new(&chain.spec) else { continue };
        let joint = build_joint(&two_state_families(2, 0.1, 5.0), &pol).unwrap();
        let solver = FcsSolver::new(&joint.spec).unwrap();

        // population block of the vectorized generator equals the rate matrix
        let n = joint.spec.dim();
        let l = solver.generator();
        let gen = chain.spec.generator();
        for i in 0..n {
            for k in 0..n {
                assert!((l[(i * n + i, k * n + k)].re - gen[(i, k)]).abs() < 1e-12);
            }
        }
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                a[(i, k)] = l[(i * n + i, k * n + k)].re;
            }
        }
        let mut ev1: Vec<f64> = a.complex_eigenvalues().iter().map(|z| z.re).collect();
        let mut ev2: Vec<f64> = gen.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev1.sort_by(f64::total_cmp);
        ev2.sort_by(f64::total_cmp);
        for (x, y) in ev1.iter().zip(&ev2) {
            assert!((x - y).abs() < 1e-9);
        }

        for _ in 0..5 {
            let cur = random_feedback_current(&mut rng, &pol);
            let r1 = fast.evaluate(&chain.weights(&cur).unwrap()).unwrap();
            let r2 = solver.evaluate(&cur).unwrap();
            assert!((r1.f - r2.f).abs() < 1e-10 * r1.f.abs().max(1.0));
            assert!((r1.d - r2.d).abs() < 1e-9 * r1.d.abs().max(1.0));
        }
    }
}

#[test]
fn single_clockwork_constant_rate_matrix() {
    let fams = ring_families(&[2], Coordinate::Interval { min: 0.1, max: 5.0 }).unwrap();
    let pol = constant_policy(&fams, &[vec![1.0, 2.0]]).unwrap();
    let chain = classical_feedback_rate_matrix(&[2], &pol).unwrap();
    assert_eq!(chain.spec.generator(), nalgebra::DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -2.0]));
    assert!(classical_feedback_rate_matrix(&[2], &constant_policy(&[ControlledFamily::qubit(1.0).unwrap()], &[vec![1.0, 1.0]]).unwrap()).is_err());
}

#[test]
fn protocol1_memory_flow_balance() {
    let ic = qubit_clockwork(0.7, 3.0, 1.0).unwrap();
    let ec = ControlledFamily::jump_strength(qubit_clockwork(0.4, 1.0, 3.0).unwrap(), Coordinate::Finite(vec![0.0, 1.0]))
        .unwrap();
    let p = protocol1_policy(&ic, &ec).unwrap();
    let joint = build_joint(&p.families, &p.policy).unwrap();
    assert_eq!(joint.spec.dim(), 2 * 2 * 2);
    let solver = FcsSolver::new(&joint.spec).unwrap();
    let ic_from_idle = IntegratedCurrent::new().with(JumpLabel::new(1, 0).with_memory(0), 1.0);
    let ec_all = IntegratedCurrent::new().with(JumpLabel::new(2, 0), 1.0);
    let f_ic = solver.evaluate(&ic_from_idle).unwrap().f;
    let f_ec = solver.evaluate(&ec_all).unwrap().f;
    assert!((f_ic - f_ec).abs() <= 1e-10 * f_ec.max(1.0), "{f_ic} vs {f_ec}");
    let f_ic_all = solver.evaluate(&IntegratedCurrent::new().with(JumpLabel::new(1, 0), 1.0)).unwrap().f;
    assert!(f_ic_all >= f_ec);
    let out = solver.evaluate(&p.output).unwrap();
    assert!(rel(out.f, f_ec) < 1e-12);
}

#[test]
fn per_memory_weights_are_distinct_from_shared() {
    let (fams, pol) = two_qubit_switching_policy(1.2, 0.88, 0.84, 3.6, 1.0).unwrap();
    let joint = build_joint(&fams, &pol).unwrap();
    let solver = FcsSolver::new(&joint.spec).unwrap();
    let shared = solver.evaluate(&IntegratedCurrent::total_count(pol.alphabet().iter().copied())).unwrap();
    let split = IntegratedCurrent::total_count(pol.alphabet().iter().copied())
        .with(JumpLabel::new(1, 0).with_memory(0), 1.3);
    let r = solver.evaluate(&split).unwrap();
    assert!((r.f - shared.f).abs() > 1e-6);
    let unknown = IntegratedCurrent::new().with(JumpLabel::new(1, 0).with_memory(5), 1.0);
    assert!(solver.evaluate(&unknown).is_err());
}

#[test]
fn ring_clockwork_keeps_zero_rate_jumps() {
    let spec = ring_clockwork(&[1.0, 0.0, 2.0]).unwrap();
    assert_eq!(spec.jumps().len(), 3);
    assert_eq!(spec.jumps()[1].op.norm(), 0.0);
}

#[test]
fn uniform_ring_hyperaccurate() {
    for d in 2..=6 {
        let g = 1.7;
        let spec = classical_to_lindblad(&ClassicalClockworkSpec::ring(&vec![g; d]).unwrap());
        let h = clockfcs::fcs::hyperaccurate_current(&spec).unwrap();
        for l in spec.labels() {
            assert!((h.weight_for(l) - 1.0 / g).abs() < 1e-14);
        }
        let r = current_and_noise(&spec, &h).unwrap();
        assert!(rel(r.s, g) < 1e-10);
    }
}
