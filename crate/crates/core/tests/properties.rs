use std::f64::consts::LN_2;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mipt::entropy::{mutual_information, von_neumann_entropy, Subsystem};
use mipt::experiment::{Command, ExperimentConfig};
use mipt::scaling::{fit_at, fit_collapse, CollapseOptions, EnsembleTable, TableRow, ValueKind};
use mipt::sim::{
    build_hea, build_xxz_hva, run_trajectory, run_trajectory_with, uniform_params, CircuitSpec,
    Family, GateOp, StateVector,
};

fn state_from(raw: &[(f64, f64)]) -> StateVector {
    let amps: Vec<Complex64> = raw.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn amplitudes(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1 << n)
        .prop_filter("non-zero", |v| v.iter().any(|&(a, b)| a.abs() + b.abs() > 1e-3))
}

fn circuit(family: bool, n: usize, depth: usize, seed: u64) -> CircuitSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if family {
        build_xxz_hva(n, depth, &uniform_params(4 * depth, &mut rng)).unwrap()
    } else {
        build_hea(n, depth, &uniform_params(2 * n * depth, &mut rng)).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_preserve_the_norm(raw in amplitudes(4), t in -7.0..7.0f64, a in 0..4usize, b in 1..4usize) {
        let mut s = state_from(&raw);
        let b = (a + b) % 4;
        for g in [GateOp::h(a), GateOp::cnot(a, b), GateOp::rx(a, t), GateOp::ry(b, t),
                  GateOp::rzz(a, b, t), GateOp::ryy(a, b, t), GateOp::rxx(a, b, t)] {
            s.apply(&g).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn measurement_renormalizes_and_purifies_the_site(raw in amplitudes(4), q in 0..4usize, seed: u64) {
        let mut s = state_from(&raw);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.measure(q, &mut rng).unwrap();
        prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        let site = von_neumann_entropy(&s, &Subsystem::new([q], 4).unwrap()).unwrap();
        prop_assert!(site.abs() < 1e-10);
    }

    #[test]
    fn complementary_cuts_agree(raw in amplitudes(5), mask in 1u32..31) {
        let s = state_from(&raw);
        let a = Subsystem::new((0..5).filter(|q| mask >> q & 1 == 1), 5).unwrap();
        let sa = von_neumann_entropy(&s, &a).unwrap();
        let sb = von_neumann_entropy(&s, &a.complement()).unwrap();
        prop_assert!((sa - sb).abs() < 1e-9);
        prop_assert!(sa >= -1e-12 && sa <= a.len().min(5 - a.len()) as f64 * LN_2 + 1e-9);
    }

    #[test]
    fn mutual_information_bounds(raw in amplitudes(4), a in 0..4usize, d in 1..4usize) {
        let s = state_from(&raw);
        let b = (a + d) % 4;
        let i = mutual_information(&s, a, b).unwrap();
        prop_assert!((0.0..=2.0 * LN_2 + 1e-9).contains(&i));
        let sa = von_neumann_entropy(&s, &Subsystem::new([a], 4).unwrap()).unwrap();
        let sb = von_neumann_entropy(&s, &Subsystem::new([b], 4).unwrap()).unwrap();
        let sab = von_neumann_entropy(&s, &Subsystem::new([a, b], 4).unwrap()).unwrap();
        prop_assert!(sab <= sa + sb + 1e-9);
    }

    #[test]
    fn trajectories_are_normalized_and_replayable(hva: bool, seed: u64, p in 0.0..1.0f64) {
        let c = circuit(hva, 6, 3, seed);
        let t = run_trajectory_with(&c, p, seed, true).unwrap();
        prop_assert!((t.final_state.norm() - 1.0).abs() < 1e-10);
        let again = run_trajectory(&c, p, seed).unwrap();
        prop_assert_eq!(&t.record, &again.record);
        prop_assert_eq!(t.final_state.amplitudes(), again.final_state.amplitudes());
        let (replayed, prob) = mipt::sim::replay_branch(&c, &t.record.sites, &t.record.outcomes).unwrap();
        prop_assert!((prob - t.record.branch_probability).abs() < 1e-12);
        prop_assert!((replayed.inner(&t.final_state).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn config_round_trips(
        hea: bool,
        sizes in prop::collection::btree_set(2usize..10, 1..4),
        depth in 1usize..30,
        samples in 2usize..5000,
        seed in 0..=i64::MAX as u64,
        p_c in prop::option::of(0.0..1.0f64),
        raw: bool,
    ) {
        let c = ExperimentConfig {
            family: if hea { Family::Hea } else { Family::XxzHva },
            sizes: Some(sizes.into_iter().map(|k| 2 * k).collect()),
            depth,
            samples: Some(samples),
            seed,
            p_c,
            raw,
            ..Default::default()
        };
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        prop_assert_eq!(&back, &c);
        let h1 = c.resolve(Command::Sweep, false).unwrap().hash();
        prop_assert_eq!(h1, back.resolve(Command::Sweep, false).unwrap().hash());
    }

    #[test]
    fn tables_round_trip(means in prop::collection::vec((0.0..3.0f64, 0.0..0.5f64), 12), r_col: bool) {
        let rows = means.iter().enumerate().map(|(k, &(m, s))| TableRow {
            family: Family::Hea,
            n: 6 + 2 * (k / 4),
            p: 0.1 * (k % 4) as f64 + 1e-3,
            r: r_col.then_some(1 + k % 2),
            depth: 16,
            samples: 500,
            mean: m,
            std: s,
            stderr: s / 500f64.sqrt(),
            raw: vec![],
        }).collect();
        let t = EnsembleTable::new(ValueKind::Entropy, rows);
        prop_assert_eq!(EnsembleTable::from_csv(&t.to_csv()).unwrap(), t);
    }
}

fn noisy_table(seed: u64) -> EnsembleTable {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = [6usize, 8, 10, 12]
        .iter()
        .flat_map(|&n| (0..11).map(move |k| (n, 0.05 * k as f64)))
        .map(|(n, p)| {
            let x = (p - 0.25) * (n as f64).powf(0.75);
            let mean = 0.6 - 0.4 * x.tanh() + rng.gen_range(-0.01..0.01);
            TableRow {
                family: Family::XxzHva,
                n,
                p,
                r: None,
                depth: 16,
                samples: 100,
                mean,
                std: 0.1,
                stderr: 0.01,
                raw: vec![],
            }
        })
        .collect();
    EnsembleTable::new(ValueKind::Entropy, rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reported_optimum_is_the_smallest_candidate(seed: u64) {
        let t = noisy_table(seed);
        let opts = CollapseOptions::default();
        let candidates = [0.15, 0.2, 0.25, 0.3, 0.35];
        let best = fit_collapse(&t, &candidates, &opts).unwrap();
        prop_assert!(best.nu > 0.0 && best.chi2 >= 0.0);
        prop_assert_eq!(best.poly_coeffs.len(), 6);
        for &(_, _, chi2) in &best.candidates {
            prop_assert!(best.chi2 <= chi2);
        }
        let again = fit_at(&t, best.p_c, &opts).unwrap();
        prop_assert_eq!(again.nu.to_bits(), best.nu.to_bits());
        prop_assert_eq!(again.chi2.to_bits(), best.chi2.to_bits());
    }
}
