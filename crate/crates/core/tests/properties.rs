use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use oneatom::fourstate::{build_four_state, critical_numbers, scale_cavity, FourStateParams};
use oneatom::hilbert::angular::clebsch_gordan2;
use oneatom::hilbert::{tensor, DensityMatrix, Factor, HilbertSpace, Operator, SparseMatrix};
use oneatom::liouvillian::Generator;
use oneatom::semiclassical::{sc_rhs, SCState};
use oneatom::steady::{observables, steady_state, FluxRates};
use oneatom::trajectories::{ground_vacuum, run_trajectory};
use oneatom::units::mhz;
use oneatom::zeeman::{pump_hamiltonian, Manifold};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sparse(rng: &mut ChaCha8Rng, n: usize) -> SparseMatrix {
    let data: Vec<C64> = (0..n * n)
        .map(|_| {
            if rng.random::<f64>() < 0.4 {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    SparseMatrix::from_dense(n, n, &data)
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

fn random_rho(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let a: Vec<C64> = (0..n * n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut rho = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            rho[i * n + j] = (0..n).map(|k| a[i * n + k] * a[j * n + k].conj()).sum();
        }
    }
    let tr: C64 = (0..n).map(|i| rho[i * n + i]).sum();
    rho.iter_mut().for_each(|z| *z /= tr);
    rho
}

fn four_state(i3: f64, i4: f64, d3: f64, dac: f64, n: usize) -> FourStateParams {
    let mut p = FourStateParams::cs_defaults().with_intensities(i3, i4).with_truncation(n);
    p.delta3 = mhz(d3);
    p.delta_ac = mhz(dac);
    p
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cg_columns_are_orthonormal(two_j1 in 0i32..7, two_j2 in 0i32..5, a in 0i32..8, b in 0i32..8, c in 0i32..6, d in 0i32..6) {
        let m1 = -two_j1 + 2 * (a % (two_j1 + 1));
        let m1p = -two_j1 + 2 * (b % (two_j1 + 1));
        let m2 = -two_j2 + 2 * (c % (two_j2 + 1));
        let m2p = -two_j2 + 2 * (d % (two_j2 + 1));
        let mut sum = 0.0;
        let mut two_j = (two_j1 - two_j2).abs();
        while two_j <= two_j1 + two_j2 {
            for two_m in (-two_j..=two_j).step_by(2) {
                sum += clebsch_gordan2(two_j1, m1, two_j2, m2, two_j, two_m).unwrap()
                    * clebsch_gordan2(two_j1, m1p, two_j2, m2p, two_j, two_m).unwrap();
            }
            two_j += 2;
        }
        let want = if m1 == m1p && m2 == m2p { 1.0 } else { 0.0 };
        prop_assert!((sum - want).abs() < 1e-12, "{sum}");
    }

    #[test]
    fn tensor_multiplies_frobenius_norms(seed in any::<u64>(), n1 in 1usize..5, n2 in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sa = HilbertSpace::single(Factor::atomic("a", &labels(n1)).unwrap());
        let sb = HilbertSpace::single(Factor::atomic("b", &labels(n2)).unwrap());
        let a = Operator::new(sa, random_sparse(&mut rng, n1)).unwrap();
        let b = Operator::new(sb, random_sparse(&mut rng, n2)).unwrap();
        let ab = tensor(&a, &b);
        let want = a.frobenius_norm() * b.frobenius_norm();
        prop_assert!((ab.frobenius_norm() - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn four_state_hamiltonian_is_hermitian(i3 in 0.0f64..30.0, i4 in 0.0f64..30.0, d3 in -40.0f64..40.0, dac in -40.0f64..40.0) {
        let m = build_four_state(&four_state(i3, i4, d3, dac, 4)).unwrap();
        prop_assert!(m.constant_hamiltonian().unwrap().is_hermitian(1e-10));
    }

    #[test]
    fn dissipator_preserves_trace_and_hermiticity(seed in any::<u64>(), i3 in 0.0f64..10.0, i4 in 0.0f64..10.0) {
        let m = build_four_state(&four_state(i3, i4, 3.0, -2.0, 3)).unwrap();
        let d = m.dim();
        let gen = Generator::new(&m).unwrap();
        let rho = random_rho(&mut ChaCha8Rng::seed_from_u64(seed), d);
        let mut out = vec![C64::new(0.0, 0.0); d * d];
        gen.apply(&rho, &mut out);
        let tr: C64 = (0..d).map(|i| out[i * d + i]).sum();
        let scale = out.iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(tr.norm() <= 1e-12 * scale.max(1.0), "{tr}");
        for i in 0..d {
            for j in 0..d {
                prop_assert!((out[i * d + j] - out[j * d + i].conj()).norm() <= 1e-10 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn cavity_scaling_keeps_critical_atom_number(f in 1e-3f64..1e4) {
        let p = FourStateParams::cs_defaults();
        let c = critical_numbers(&p).unwrap();
        let cf = critical_numbers(&scale_cavity(&p, f).unwrap()).unwrap();
        prop_assert!((cf.N0 / c.N0 - 1.0).abs() < 1e-12);
        prop_assert!((cf.n0 / (f * c.n0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_field_conserves_population(seed in any::<u64>(), i3 in 0.0f64..10.0, i4 in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = four_state(i3, i4, 0.0, 0.0, 1);
        let rho = random_rho(&mut rng, 4);
        let state = SCState {
            alpha: C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            sigma: rho,
            levels: 4,
        };
        let d = sc_rhs(&state, &p).unwrap();
        let total: f64 = d.populations().iter().sum();
        prop_assert!(total.abs() < 1e-12 * mhz(30.0), "{total}");
    }

    #[test]
    fn zeeman_pump_is_hermitian(tx in 0.0f64..2.0 * PI, tz in 0.0f64..2.0 * PI, omega in 0.0f64..100.0) {
        for (g, e) in [(Manifold::G3, Manifold::E3), (Manifold::G4, Manifold::E4)] {
            let h = pump_hamiltonian(omega, g, e, tx, tz).unwrap();
            prop_assert!(h.is_hermitian(1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn steady_statistics_identities(i3 in 0.2f64..8.0, i4 in 0.5f64..8.0) {
        let p = four_state(i3, i4, 0.0, 0.0, 6);
        let m = build_four_state(&p).unwrap();
        let rho = steady_state(&m).unwrap();
        let obs = observables(&rho, &m, &FluxRates::from_params(&p).unwrap()).unwrap();
        let total: f64 = obs.populations.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-8);
        let (q, g2) = (obs.mandel_q.unwrap(), obs.g2_0.unwrap());
        prop_assert!(g2 >= 0.0 && q >= -1.0);
        prop_assert!((q - obs.n_bar * (g2 - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn trajectories_replay_from_their_seed(seed in any::<u64>()) {
        let m = build_four_state(&four_state(2.0, 3.0, 0.0, 0.0, 3)).unwrap();
        let psi = ground_vacuum(&m);
        let a = run_trajectory(&m, &psi, 3.0, seed).unwrap();
        let b = run_trajectory(&m, &psi, 3.0, seed).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        prop_assert!(a.clicks.windows(2).all(|w| w[0].time < w[1].time));
        prop_assert!(a.clicks.iter().all(|c| m.channel_index(&c.channel).is_some()));
    }
}

#[test]
fn coherent_state_is_poissonian() {
    // |α⟩ in a 30-photon space on an atom in g3
    let p = four_state(0.0, 0.0, 0.0, 0.0, 30);
    let m = build_four_state(&p).unwrap();
    let alpha: f64 = 1.3;
    let d = m.dim();
    let mut amp = vec![C64::new(0.0, 0.0); d];
    let mut c = (-alpha * alpha / 2.0).exp();
    for n in 0..=30 {
        amp[m.space().index(&[0, n])] = C64::new(c, 0.0);
        c *= alpha / ((n + 1) as f64).sqrt();
    }
    let psi = oneatom::hilbert::StateVector::new(m.space(), amp).unwrap();
    let rho = DensityMatrix::from_pure(&psi);
    let obs = observables(&rho, &m, &FluxRates::from_params(&p).unwrap()).unwrap();
    assert!(obs.mandel_q.unwrap().abs() < 1e-8);
    assert!((obs.g2_0.unwrap() - 1.0).abs() < 1e-8);
}
