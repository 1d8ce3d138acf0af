use std::sync::Arc;

use acnavier_core::eps_limit::LerayProjector;
use acnavier_core::forcing::sample_increment;
use acnavier_core::io::{config_from_str, decode_snapshot, encode_snapshot};
use acnavier_core::operators::{random_field, Advection};
use acnavier_core::{
    DeterministicForce, NoiseModel, NoiseSpec, SeedPath, Solver, SolverConfig, Space, State,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn field(space: &Space, seed: u64) -> acnavier_core::VelocityField {
    random_field(space, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bhat_pairing_with_own_argument_vanishes(n in 1usize..6, seed: u64, amp in 1e-3f64..1e3) {
        let space = Space::new(n).unwrap();
        let adv = Advection::for_space(&space);
        let u = &field(&space, seed) * amp;
        let v = &field(&space, seed.wrapping_add(1)) * amp;
        let scale = u.h10_norm().powi(2) * u.l2_norm() + u.h10_norm() * v.h10_norm() * v.l2_norm();
        prop_assert!(adv.bhat(&u).pair(&u).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
        prop_assert!(adv.bhat_pair(&u, &v).pair(&v).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn trilinear_is_antisymmetric_in_last_two(n in 1usize..5, seed: u64) {
        let space = Space::new(n).unwrap();
        let adv = Advection::for_space(&space);
        let (u, v, w) = (field(&space, seed), field(&space, seed ^ 1), field(&space, seed ^ 2));
        let a = adv.trilinear(&u, &v, &w);
        let b = adv.trilinear(&u, &w, &v);
        let scale = u.h10_norm() * v.h10_norm() * w.h10_norm();
        prop_assert!((a + b).abs() <= 1e-12 * scale);
    }

    #[test]
    fn divergence_pairing_is_minus_gradient_pairing(n in 1usize..7, seed: u64) {
        let space = Space::new(n).unwrap();
        let u = field(&space, seed);
        let mut p = space.zero_pressure();
        for (i, c) in p.coeffs_mut().iter_mut().enumerate() {
            *c = ((seed.wrapping_mul(i as u64 + 3) % 1000) as f64 - 500.0) / 500.0;
        }
        let grad = space.pressure_gradient(&p).dot(u.coeffs());
        let div = space.gram().inner(p.coeffs(), space.divergence(&u).coeffs());
        let scale = space.pressure_l2_norm(&p) * u.h10_norm();
        prop_assert!((grad + div).abs() <= 1e-10 * scale);
    }

    #[test]
    fn increments_are_pure_functions_of_seed_path(seed: u64, path in 0u64..1000, step in 0u64..100_000) {
        let space = Space::new(3).unwrap();
        let g = NoiseModel::low_modes(&space, 2, 0.1).unwrap();
        let sp = SeedPath::new(seed, path, step);
        let a = sample_increment(&g, 1e-3, sp);
        let b = sample_increment(&g, 1e-3, sp);
        prop_assert_eq!(&a, &b);
        let c = sample_increment(&g, 1e-3, SeedPath::new(seed, path, step + 1));
        prop_assert_ne!(a.dw, c.dw);
    }

    #[test]
    fn ledger_residual_matches_its_terms(seed: u64, eps in 1e-3f64..1.0, nu in 0.01f64..1.0) {
        let space = Arc::new(Space::new(3).unwrap());
        let cfg = SolverConfig { n_modes: 3, nu, eps, dt: 1e-2, t_final: 0.03, seed, ..SolverConfig::default() };
        let noise = NoiseSpec::default().build(&space).unwrap();
        let solver = Solver::new(space.clone(), cfg, DeterministicForce::zero(&space), noise).unwrap();
        let mut s = State::zero(&space);
        s.u = &field(&space, seed) * 0.1;
        let rec = solver.run_path(&s, 0).unwrap();
        for e in &rec.ledger {
            prop_assert!((e.residual - e.recomputed_residual()).abs() <= 1e-12 * e.energy_before.max(1e-12));
            prop_assert!(e.dissipation_increment >= 0.0);
        }
    }

    #[test]
    fn snapshot_round_trips(n in 1usize..5, seed: u64, t in 0.0f64..10.0) {
        let space = Space::new(n).unwrap();
        let mut s = State::zero(&space);
        s.u = field(&space, seed);
        s.p.coeffs_mut()[0] = t.sin();
        s.t = t;
        let digest = [seed as u8; 32];
        let (back, d) = decode_snapshot(&encode_snapshot(&s, &digest).unwrap()).unwrap();
        prop_assert_eq!(back, s);
        prop_assert_eq!(d, digest);
    }

    #[test]
    fn overrides_win_over_file_values(nu in 1e-3f64..10.0, file_nu in 1e-3f64..10.0) {
        let text = format!("[solver]\nnu = {file_nu:?}\n");
        let cfg = config_from_str(&text, &[format!("nu={nu:?}")]).unwrap();
        prop_assert_eq!(cfg.problem.solver.nu, nu);
        let cfg = config_from_str(&text, &[]).unwrap();
        prop_assert_eq!(cfg.problem.solver.nu, file_nu);
    }
}

#[test]
fn divergence_free_subspace_is_trivial() {
    for n in [1, 2, 4, 8] {
        let space = Space::new(n).unwrap();
        let p = LerayProjector::new(&space);
        assert_eq!(p.rank(), 0, "N={n}");
        assert_eq!(p.project(&field(&space, 3)).l2_norm(), 0.0);
    }
}
