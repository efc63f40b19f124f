//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines come out in order
//! and unbuffered. Exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ipc_core::capacity::{correlation, gram, inject_additive_noise, raw_capacity_unclamped};
use ipc_core::dataset::Matrix;
use ipc_core::estimators::{estimate, EstimatorConfig};
use ipc_core::factor::indicator_function;
use ipc_core::photonic::{simulate_dataset, Scenario};
use ipc_core::plot::{render, PlotKind, PlotOptions};
use ipc_core::stats::{median, ols_slope};
use ipc_core::synthetic::{
    make_low_rank_synthetic, make_synthetic, validation_run, SourceKind, ValidationParams,
};
use ipc_core::tasks::{run_benchmark, two_spirals, BenchSystem};
use ipc_core::{
    basis::fourth_moment, enumerate_basis, pseudo_random_points, sobol_points, BasisSet, Dataset,
    SampleMatrix, SampleSource,
};

const EIGEN_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    let elapsed = t.elapsed();
    let in_budget = elapsed <= budget;
    let pass = o.pass && in_budget;
    let time_note = if in_budget {
        String::new()
    } else {
        format!(", over the {budget:?} budget")
    };
    println!(
        "criterion {id:>2} {name}: {} ({}{time_note}) [{:.1?}]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed
    );
    pass
}

fn basis_counts() -> Outcome {
    let a = enumerate_basis(5, 8).unwrap().len();
    let b = enumerate_basis(2, 14).unwrap().len();
    outcome(
        a == 1287 && b == 120,
        format!("q5 d8 -> {a}, q2 d14 -> {b}"),
    )
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let p_and_dp = |x: f64| {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    };
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = p_and_dp(x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = p_and_dp(x);
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Orthonormal Legendre polynomial under the uniform measure on [-1, 1].
fn orthonormal_legendre(l: u32, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return 1.0;
    }
    for k in 2..=l {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    ((2 * l + 1) as f64).sqrt() * p1
}

fn fourth_moments() -> Outcome {
    let rule = gauss_legendre(64);
    let mut worst = 0.0f64;
    for l in 0..=14 {
        let quad: f64 = rule
            .iter()
            .map(|&(x, w)| 0.5 * w * orthonormal_legendre(l, x).powi(4))
            .sum();
        worst = worst.max((fourth_moment(l) - quad).abs());
    }
    outcome(
        worst < 1e-9,
        format!("max |exact - quadrature| = {worst:.2e}"),
    )
}

/// Capacity of every basis function with the target normalised by its own
/// sample mean square, without clamping.
fn unclamped_capacities(data: &Dataset, basis: &BasisSet) -> Vec<f64> {
    let stats = gram(data, EIGEN_TOL).unwrap();
    let y = basis.evaluate(&data.inputs.points).unwrap();
    y.column_iter()
        .map(|c| {
            let c: Vec<f64> = c.iter().copied().collect();
            let ms = c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64;
            raw_capacity_unclamped(&stats, &correlation(data, &c).unwrap(), ms).unwrap()
        })
        .collect()
}

fn saturation() -> Outcome {
    let basis = enumerate_basis(2, 6).unwrap();
    let mut worst = 0.0f64;
    let mut systems = 0;
    for n in [8usize, 32, 72] {
        for s in 0..50u64 {
            let inputs = pseudo_random_points(2, n, 10_000 + s);
            let readouts = pseudo_random_points(n, n, 20_000 + s).points;
            let data = Dataset::new(inputs, readouts).unwrap();
            for c in unclamped_capacities(&data, &basis) {
                worst = worst.max((c - 1.0).abs());
            }
            systems += 1;
        }
    }
    outcome(
        worst < 1e-9,
        format!("{systems} systems, max |C - 1| = {worst:.2e}"),
    )
}

/// Two readouts spanning the degree-1 and degree-3 functions of one input,
/// evaluated on a dense midpoint grid.
fn span_system() -> Dataset {
    let m = 20_000;
    let points = Matrix::from_fn(m, 1, |i, _| -1.0 + (2 * i + 1) as f64 / m as f64);
    let inputs = SampleMatrix::new(points, SampleSource::External, true).unwrap();
    let readouts = Matrix::from_fn(m, 2, |i, j| {
        let x = inputs.points[(i, 0)];
        let (p1, p3) = (orthonormal_legendre(1, x), orthonormal_legendre(3, x));
        if j == 0 {
            p1 + 0.5 * p3
        } else {
            p3 - 0.3 * p1
        }
    });
    Dataset::new(inputs, readouts).unwrap()
}

fn raw_values(data: &Dataset, basis: &BasisSet) -> Vec<f64> {
    estimate(data, basis, &EstimatorConfig::default())
        .unwrap()
        .values
        .iter()
        .map(|v| v.raw)
        .collect()
}

fn sum_rule_and_invariance() -> Outcome {
    let basis = enumerate_basis(1, 3).unwrap();
    let data = span_system();
    let raw = raw_values(&data, &basis);
    let total: f64 = raw.iter().sum();

    let mix = pseudo_random_points(2, 2, 77).points;
    let mixed = Dataset::new(data.inputs.clone(), &data.readouts * &mix).unwrap();
    let det = mix.determinant();
    let shift = raw_values(&mixed, &basis)
        .iter()
        .zip(&raw)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        (total - 2.0).abs() < 1e-6 && shift < 1e-8 && det.abs() > 1e-3,
        format!("sum = {total:.9}, mixing (det {det:.3}) shift = {shift:.2e}"),
    )
}

fn noise_decrease() -> Outcome {
    let basis = enumerate_basis(1, 3).unwrap();
    let data = span_system();
    let stds: Vec<f64> = data
        .readouts
        .column_iter()
        .map(|c| 0.3 * (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
        .collect();
    let mut ok = 0;
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let noisy = inject_additive_noise(&data, &stds, seed).unwrap();
        let total: f64 = raw_values(&noisy, &basis).iter().sum();
        worst = worst.max(total);
        if total < 2.0 - 0.05 {
            ok += 1;
        }
    }
    outcome(
        ok >= 19,
        format!("{ok}/20 seeds below 1.95, largest sum {worst:.4}"),
    )
}

fn bias_correction() -> Outcome {
    let params = |source| ValidationParams {
        q: 5,
        d_max: 8,
        n_sel: 200,
        k: 71,
        n: 8192,
        source,
        repeats: 20,
        seed: 1,
        augment: true,
    };
    let cfg = EstimatorConfig::default();
    let sobol = validation_run(&params(SourceKind::Sobol), &cfg).unwrap();
    let prng = validation_run(&params(SourceKind::PseudoRandom), &cfg).unwrap();
    let a = sobol.mean_raw_err > 0.0;
    let b = sobol.mean_corr_err.abs() < 0.25 * sobol.mean_raw_err;
    let t = &sobol.total_err_stats;
    let c = (t.mean_total_corrected - t.ground_truth_rank).abs() <= 0.03 * t.ground_truth_rank;
    let d = sobol.std_corr_err < prng.std_corr_err;
    outcome(
        a && b && c && d,
        format!(
            "raw err {:.3e}, corrected err {:.3e}, total {:.2} vs {}, corrected std sobol {:.2e} < prng {:.2e}: {}",
            sobol.mean_raw_err,
            sobol.mean_corr_err,
            t.mean_total_corrected,
            t.ground_truth_rank,
            sobol.std_corr_err,
            prng.std_corr_err,
            [a, b, c, d].map(|x| if x { "ok" } else { "no" }).join("/")
        ),
    )
}

/// Log-log slopes of the median absolute raw and Richardson errors over
/// `N = 2^10..2^15` on one fixed synthetic system.
fn convergence_slopes(points: impl Fn(usize) -> SampleMatrix) -> (f64, f64) {
    let sys = make_synthetic(2, 8, 12, 6, 1).unwrap();
    let truth = sys.true_capacities(true);
    let cfg = EstimatorConfig {
        record_halves: true,
        ..Default::default()
    };
    let (mut xs, mut raw, mut rich) = (vec![], vec![], vec![]);
    for e in 10..=15 {
        let n = 1usize << e;
        let data = sys.evaluate_readouts(&points(n), true).unwrap();
        let rep = estimate(&data, &sys.basis, &cfg).unwrap();
        let mut raw_err = vec![];
        let mut rich_err = vec![];
        for (v, t) in rep.values.iter().zip(&truth) {
            let h = v.halves.unwrap();
            raw_err.push((v.raw - t).abs());
            rich_err.push((2.0 * v.raw - 0.5 * (h[0] + h[1]) - t).abs());
        }
        xs.push((n as f64).ln());
        raw.push(median(&raw_err).ln());
        rich.push(median(&rich_err).ln());
    }
    (ols_slope(&xs, &raw), ols_slope(&xs, &rich))
}

fn convergence_order() -> Outcome {
    let (raw, rich) = convergence_slopes(|n| pseudo_random_points(2, n, 99));
    let (sobol_raw, sobol_rich) = convergence_slopes(|n| sobol_points(2, n).unwrap());
    let raw_ok = (raw + 1.0).abs() <= 0.25;
    let rich_ok = rich < -1.2;
    outcome(
        raw_ok && rich_ok,
        format!(
            "i.i.d. points: raw slope {raw:.3} ({}), Richardson slope {rich:.3} ({}); sobol for reference: raw {sobol_raw:.3}, Richardson {sobol_rich:.3}",
            if raw_ok { "ok" } else { "no" },
            if rich_ok { "ok" } else { "no" }
        ),
    )
}

fn integrator() -> Outcome {
    // The integrator properties are checked against their oracles in the core
    // unit tests; re-run those three here on the public API.
    use ipc_core::photonic::{make_sech_pulse, propagate, FiberConfig, TimeGrid};
    let grid = TimeGrid {
        n_points: 1 << 13,
        t_window_ps: 256.0,
    };
    let lossless = FiberConfig {
        alpha: 0.0,
        length_m: 40.0,
        ..Default::default()
    };
    let pulse = make_sech_pulse(61.0, 4.2, grid, 1550.0).unwrap();
    let out = propagate(&pulse, &lossless).unwrap();
    let energy_err = (out.energy() - pulse.energy()).abs() / pulse.energy();

    let tau = 4.2 / ipc_core::photonic::SECH_FWHM_FACTOR;
    let gamma = lossless.gamma;
    let beta2 = lossless.beta2;
    let p0 = beta2.abs() / (gamma * tau * tau);
    let soliton_fiber = FiberConfig {
        length_m: 100.0,
        ..lossless
    };
    let sol = make_sech_pulse(p0, 4.2, grid, 1550.0).unwrap();
    let after = propagate(&sol, &soliton_fiber).unwrap();
    let shape_err = sol
        .envelope
        .iter()
        .zip(&after.envelope)
        .map(|(a, b)| (a.norm() - b.norm()).abs())
        .fold(0.0, f64::max)
        / p0.sqrt();

    let linear = FiberConfig {
        gamma: 0.0,
        length_m: 40.0,
        ..lossless
    };
    let lin = propagate(&pulse, &linear).unwrap();
    let (s0, s1) = (pulse.spectrum(), lin.spectrum());
    let smax = s0.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let spec_err = s0
        .iter()
        .zip(&s1)
        .map(|(a, b)| (a.norm() - b.norm()).abs())
        .fold(0.0, f64::max)
        / smax;
    outcome(
        energy_err <= 1e-6 && shape_err < 1e-3 && spec_err <= 1e-9,
        format!(
            "energy {energy_err:.2e}, soliton L-inf {shape_err:.2e}, linear spectrum {spec_err:.2e}"
        ),
    )
}

const PHI_SWEEP: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 3.0];
const SWEEP_FIBER_M: f64 = 40.0;
const SWEEP_POINTS: usize = 4096;

fn sweep_scenario(phi: f64) -> Scenario {
    let mut sc = Scenario::default().with_nonlinear_phase(phi, SWEEP_FIBER_M);
    sc.pulse.n_points = SWEEP_POINTS;
    sc
}

fn capacity_trend() -> Outcome {
    let basis = enumerate_basis(2, 8).unwrap();
    let samples = sobol_points(2, 4096).unwrap();
    let mut totals = vec![];
    let mut high = vec![];
    for phi in PHI_SWEEP {
        let data = simulate_dataset(&samples, &sweep_scenario(phi))
            .unwrap()
            .augment();
        let rep = estimate(&data, &basis, &EstimatorConfig::default()).unwrap();
        totals.push(rep.total_corrected);
        high.push(
            rep.values
                .iter()
                .filter(|v| v.index.total_degree() >= 3)
                .map(|v| rep.value_of(v))
                .sum::<f64>(),
        );
    }
    let monotone = totals.windows(2).all(|w| w[1] >= w[0]);
    let grows = high[high.len() - 1] > high[0];
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        monotone && grows,
        format!("totals [{}], degree>=3 [{}]", fmt(&totals), fmt(&high)),
    )
}

fn task_correlation() -> Outcome {
    let task = two_spirals(2000, 0.0, 1).unwrap();
    let mut sc = sweep_scenario(PHI_SWEEP[PHI_SWEEP.len() - 1]);
    sc.encoder.out_of_span_transmission = 1.0;
    let photonic =
        run_benchmark(&task, &BenchSystem::PhotonicSim(Box::new(sc)), None, 5, 1).unwrap();
    let linear = run_benchmark(&task, &BenchSystem::Identity, None, 5, 1).unwrap();
    let blocked = run_benchmark(
        &task,
        &BenchSystem::PhotonicSim(Box::new(sweep_scenario(PHI_SWEEP[PHI_SWEEP.len() - 1]))),
        None,
        5,
        1,
    )
    .unwrap();
    outcome(
        photonic.mean >= linear.mean + 0.05 && linear.mean < 0.65,
        format!(
            "photonic {:.3} vs linear {:.3} (opaque out-of-span mask: {:.3})",
            photonic.mean, linear.mean, blocked.mean
        ),
    )
}

fn factor_dimensionality() -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for r in [3usize, 5, 10] {
        let mut hits = 0;
        let mut worst_gap = 0.0f64;
        for seed in 0..10u64 {
            let sys = make_low_rank_synthetic(2, 6, 20, 71, r, seed).unwrap();
            let clean = sys
                .evaluate_readouts(&pseudo_random_points(2, 8192, 1000 + seed), false)
                .unwrap();
            let noisy = inject_additive_noise(&clean, &[1.0; 71], 2000 + seed).unwrap();
            let argmin = indicator_function(&noisy).unwrap().argmin;
            let total = estimate(&noisy, &sys.basis, &EstimatorConfig::default())
                .unwrap()
                .total_corrected;
            if argmin == Some(r) {
                hits += 1;
            }
            let gap = argmin.map_or(f64::INFINITY, |a| (a as f64 - total).abs());
            worst_gap = worst_gap.max(gap);
        }
        ok &= hits >= 8 && worst_gap <= 2.0;
        parts.push(format!("r={r}: {hits}/10 exact, max gap {worst_gap:.2}"));
    }
    outcome(ok, parts.join("; "))
}

fn ipc(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_ipc"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sys = make_synthetic(2, 5, 6, 4, 11).unwrap();
    let data = sys
        .evaluate_readouts(&sobol_points(2, 512).unwrap(), false)
        .unwrap();
    data.save_csv_pair(&d.join("in.csv"), &d.join("x.csv"))
        .unwrap();
    std::fs::write(
        d.join("small.toml"),
        "seed = 7\n[pulse]\nn_points = 4096\n[fiber]\nlength_m = 40.0\n",
    )
    .unwrap();

    let runs: [(&str, &str, &[&str]); 7] = [
        (
            "estimate",
            "estimate --inputs in.csv --readouts x.csv --d-max 5 --out {}.json",
            &[".json"],
        ),
        (
            "simulate",
            "simulate --scenario small.toml --n 64 --out {} --dump-spectrum 1",
            &["_inputs.csv", "_readouts.csv", "_meta.json", "_spectrum_1.csv"],
        ),
        (
            "validate",
            "validate --q 2 --d-max 5 --n-sel 8 --k 4 --n 512 --repeats 3 --out {}.json",
            &[".json"],
        ),
        (
            "factor-dim",
            "factor-dim --readouts x.csv --out {}.json --curve-csv {}.csv",
            &[".json", ".csv"],
        ),
        (
            "benchmark",
            "benchmark --task spirals --n 200 --system photonic --scenario small.toml --baseline --out {}.json",
            &[".json"],
        ),
        (
            "plot-matrix",
            "plot --report estimate_a.json --kind matrix --out {}.svg",
            &[".svg"],
        ),
        (
            "plot-bars",
            "plot --report estimate_a.json --kind bars --out {}.svg",
            &[".svg"],
        ),
    ];

    let mut failures = vec![];
    for (name, template, suffixes) in &runs {
        for tag in ["a", "b"] {
            let prefix = format!("{name}_{tag}");
            let line = template.replace("{}", &prefix);
            let args: Vec<&str> = line.split_whitespace().collect();
            if !ipc(d, &args) {
                failures.push(format!("{name} run {tag} failed"));
            }
        }
        for suffix in suffixes.iter() {
            let a = std::fs::read(d.join(format!("{name}_a{suffix}")));
            let b = std::fs::read(d.join(format!("{name}_b{suffix}")));
            match (a, b) {
                (Ok(a), Ok(b)) if a == b => {}
                _ => failures.push(format!("{name}{suffix} differs")),
            }
        }
    }

    let basis = enumerate_basis(2, 5).unwrap();
    let loaded = Dataset::load_csv_pair(&d.join("in.csv"), &d.join("x.csv")).unwrap();
    let lib = estimate(&loaded.augment(), &basis, &EstimatorConfig::default()).unwrap();
    let cli_json = std::fs::read_to_string(d.join("estimate_a.json")).unwrap_or_default();
    if cli_json != lib.to_json().unwrap() + "\n" {
        failures.push("estimate differs from the library".into());
    }
    let svg = std::fs::read_to_string(d.join("plot-bars_a.svg")).unwrap_or_default();
    if svg != render(&lib, PlotKind::CapacityBarPlot, &PlotOptions::default()).unwrap() {
        failures.push("bar plot differs from the library".into());
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} commands byte-identical across runs and against the library",
                runs.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        run(1, "basis counts", secs(1), basis_counts),
        run(2, "fourth moments", secs(1), fourth_moments),
        run(3, "saturation at N = K", secs(10), saturation),
        run(
            4,
            "sum rule and mixing invariance",
            secs(5),
            sum_rule_and_invariance,
        ),
        run(
            5,
            "noise strictly lowers capacity",
            secs(30),
            noise_decrease,
        ),
        run(6, "bias correction", secs(15 * 60), bias_correction),
        run(7, "convergence order", secs(10 * 60), convergence_order),
        run(8, "NLSE integrator", secs(60), integrator),
        run(
            9,
            "nonlinearity raises capacity",
            secs(30 * 60),
            capacity_trend,
        ),
        run(10, "task correlation", secs(20 * 60), task_correlation),
        run(
            11,
            "factor dimensionality",
            secs(10 * 60),
            factor_dimensionality,
        ),
        run(12, "determinism and goldens", secs(10 * 60), determinism),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
