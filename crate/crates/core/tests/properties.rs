//! Property-based invariants across modules.

use ipc_core::basis::fourth_moment_product;
use ipc_core::capacity::capacity_sweep;
use ipc_core::factor::indicator_function;
use ipc_core::photonic::{detect, encode_inputs, make_sech_pulse, propagate, Scenario};
use ipc_core::synthetic::make_synthetic;
use ipc_core::{enumerate_basis, pseudo_random_points, sobol_points, Dataset, MultiIndex};
use proptest::prelude::*;

const TOL: f64 = 1e-10;

fn random_dataset(q: usize, n: usize, k: usize, seed: u64) -> Dataset {
    let inputs = pseudo_random_points(q, n, seed);
    let readouts = pseudo_random_points(k, n, seed + 1)
        .points
        .map(|v| v.powi(3) + 0.2);
    Dataset::new(inputs, readouts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn raw_capacities_lie_in_the_unit_interval(q in 1usize..4, k in 1usize..12, seed in 0u64..1000) {
        let data = random_dataset(q, 64, k, seed);
        for v in capacity_sweep(&data, &enumerate_basis(q, 4).unwrap(), TOL).unwrap() {
            prop_assert!((0.0..=1.0).contains(&v.raw));
        }
    }

    #[test]
    fn invertible_mixing_and_scaling_leave_capacities_unchanged(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let data = random_dataset(2, 256, 4, seed);
        let mix = pseudo_random_points(4, 4, seed + 7).points
            + ipc_core::dataset::Matrix::identity(4, 4) * 3.0;
        let mixed = Dataset::new(data.inputs.clone(), &data.readouts * mix * scale).unwrap();
        let basis = enumerate_basis(2, 5).unwrap();
        let a = capacity_sweep(&data, &basis, TOL).unwrap();
        let b = capacity_sweep(&mixed, &basis, TOL).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.raw - y.raw).abs() < 1e-9, "{} vs {}", x.raw, y.raw);
        }
    }

    #[test]
    fn synthetic_truth_sums_to_the_readout_count(q in 2usize..4, extra in 0usize..6, k in 1usize..6, seed in 0u64..1000) {
        let sys = make_synthetic(q, 4, k + extra, k, seed).unwrap();
        let total: f64 = sys.true_capacities(false).iter().sum();
        prop_assert!((total - k as f64).abs() < 1e-9);
        for c in sys.true_capacities(false) {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&c));
        }
    }

    #[test]
    fn sobol_prefixes_with_the_origin_stratify_every_coordinate(q in 1usize..6, m in 1u32..9) {
        let n = 1usize << m;
        let pts = sobol_points(q, n - 1).unwrap();
        for j in 0..q {
            let mut cells: Vec<usize> = (0..n - 1)
                .map(|i| (((pts.points[(i, j)] + 1.0) / 2.0) * n as f64).floor() as usize)
                .chain(std::iter::once(0))
                .collect();
            cells.sort_unstable();
            prop_assert_eq!(cells, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn fourth_moment_products_are_at_least_one(d in proptest::collection::vec(0u32..10, 1..5)) {
        prop_assert!(fourth_moment_product(&MultiIndex::new(d)) >= 1.0 - 1e-12);
    }

    #[test]
    fn indicator_argmin_is_scale_invariant(seed in 0u64..1000, scale in 0.001f64..1000.0) {
        let sys = make_synthetic(2, 5, 12, 4, seed).unwrap();
        let clean = sys.evaluate_readouts(&sobol_points(2, 512).unwrap(), false).unwrap();
        let noise = pseudo_random_points(4, 512, seed + 3).points * 0.1;
        let noisy = Dataset::new(clean.inputs.clone(), &clean.readouts + noise).unwrap();
        let scaled = Dataset::new(clean.inputs.clone(), &noisy.readouts * scale).unwrap();
        prop_assert_eq!(
            indicator_function(&noisy).unwrap().argmin,
            indicator_function(&scaled).unwrap().argmin
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn opaque_out_of_span_mask_hides_the_global_input_sign(u1 in -1.0f64..1.0, u2 in -1.0f64..1.0, index in 0u64..100) {
        let mut sc = Scenario::default().with_nonlinear_phase(1.0, 10.0);
        sc.pulse.n_points = 4096;
        let pulse = make_sech_pulse(
            sc.pulse.peak_power(),
            sc.pulse.tau_fwhm_ps,
            sc.pulse.grid(),
            sc.pulse.center_wavelength_nm,
        )
        .unwrap();
        let read = |u: [f64; 2]| {
            let field = encode_inputs(&pulse, &u, &sc.encoder, Some((sc.seed, index))).unwrap();
            detect(&propagate(&field, &sc.fiber).unwrap(), &sc.detector).unwrap()
        };
        let (a, b) = (read([u1, u2]), read([-u1, -u2]));
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
    }
}
