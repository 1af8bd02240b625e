//! Acceptance suite. Prints one PASS/FAIL line per criterion, even when output
//! is captured, then fails if any criterion failed.

use std::io::Write;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use tqfi::fisher::{self, QfiMethod, DEFAULT_DELTAS};
use tqfi::linalg::HermitianOperator;
use tqfi::states::{self, DensityMatrix, UnitaryFamily};
use tqfi::verify::{self, PropertyReport, SuiteConfig};
use tqfi::Error;

const SEED: u64 = 20240601;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn report(index: usize, title: &str, outcome: &Outcome) {
    let line = format!(
        "{} criterion {index}: {title} ({})\n",
        if outcome.passed { "PASS" } else { "FAIL" },
        outcome.detail
    );
    // bypass the test harness capture so the lines always reach the log
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn summarize(r: &PropertyReport) -> String {
    format!(
        "{} trials={} failures={} worst_slack={:.3e} excluded={}",
        r.property_id, r.trials, r.failures, r.worst_slack, r.degenerate_excluded
    )
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(fisher::CONVERGENCE_SCALE_FLOOR)
}

fn random_family<R: Rng>(rng: &mut R, d: usize, r: usize) -> UnitaryFamily {
    let rho = states::random_density_with(rng, d, r).unwrap();
    UnitaryFamily::new(rho, states::random_generator_with(rng, d)).unwrap()
}

fn kept_weight(family: &UnitaryFamily, m: usize) -> f64 {
    family.truncate_pair(0.0, 0.0, m).unwrap().kept_weight()
}

fn lemma1_chain() -> Outcome {
    let start = Instant::now();
    let mut rng = states::seeded_rng(SEED);
    let mut worst_chain = f64::INFINITY;
    let mut worst_equality = 0.0_f64;
    for _ in 0..200 {
        let d = rng.random_range(1..=8);
        let r = rng.random_range(1..=d);
        let family = random_family(&mut rng, d, r);
        let qfi = fisher::qfi(&family, 0.0, QfiMethod::Eigenbasis).unwrap().value;
        let values: Vec<f64> = (1..=d).map(|m| fisher::tqfi(&family, 0.0, m).unwrap().value).collect();
        for w in values.windows(2) {
            worst_chain = worst_chain.min(w[1] - w[0]);
        }
        for v in &values {
            worst_chain = worst_chain.min(qfi - v);
        }
        worst_equality = worst_equality.max((values[family.rank() - 1] - qfi).abs());
    }
    let suite = verify::check_lemma1(200, 8, SEED);
    let elapsed = start.elapsed();
    Outcome {
        passed: worst_chain >= -1e-9 && worst_equality <= 1e-9 && suite.passed() && elapsed <= Duration::from_secs(20),
        detail: format!(
            "chain slack {worst_chain:.3e}, rank equality {worst_equality:.3e}, {}, {:.2} s",
            summarize(&suite),
            elapsed.as_secs_f64()
        ),
    }
}

fn route_agreement() -> Outcome {
    let mut rng = states::seeded_rng(SEED + 2);
    let (mut assessed, mut redrawn) = (0, 0);
    let (mut worst_tsld, mut worst_fd) = (0.0_f64, 0.0_f64);
    let mut errors = Vec::new();
    while assessed < 100 {
        let d = rng.random_range(2..=6);
        let r = rng.random_range(2..=d);
        let family = random_family(&mut rng, d, r);
        let m = rng.random_range(1..r);
        // the default grid needs delta^2 <= 0.01 (1 - Tr rho^(m)) at delta = 1e-2
        if fisher::check_delta_guard(1.0 - kept_weight(&family, m), &DEFAULT_DELTAS).is_err() {
            redrawn += 1;
            continue;
        }
        assessed += 1;
        let theta = rng.random_range(-1.0..1.0);
        let closed = fisher::tqfi_closed(&family, m).unwrap().value;
        let tsld = fisher::tqfi_tsld(&family, theta, m).unwrap().value;
        worst_tsld = worst_tsld.max((closed - tsld).abs());
        match fisher::tqfi_fd(&family, theta, m, &DEFAULT_DELTAS) {
            Ok(fd) => worst_fd = worst_fd.max(relative_gap(fd.value, closed).max(relative_gap(fd.value, tsld))),
            Err(e) => errors.push(format!("d={d} r={r} m={m}: {e}")),
        }
    }
    Outcome {
        passed: worst_tsld <= 1e-10 && worst_fd <= 1e-4 && errors.is_empty(),
        detail: format!(
            "{assessed} instances ({redrawn} redrawn for the trace guard), closed vs tsld {worst_tsld:.3e}, \
             vs fd {worst_fd:.3e} relative, errors {errors:?}"
        ),
    }
}

fn variance_oracle(family: &UnitaryFamily) -> f64 {
    let rho = family.probe().matrix();
    let g = family.generator().matrix();
    let mean = (rho * g).trace().re;
    let second = (rho * g * g).trace().re;
    4.0 * (second - mean * mean)
}

fn qfi_cross_validation() -> Outcome {
    let mut rng = states::seeded_rng(SEED + 3);
    let mut worst = 0.0_f64;
    let mut errors = Vec::new();
    for _ in 0..100 {
        let d = rng.random_range(2..=8);
        let r = rng.random_range(1..=d);
        let family = random_family(&mut rng, d, r);
        let theta = rng.random_range(-1.0..1.0);
        let eig = fisher::qfi(&family, theta, QfiMethod::Eigenbasis).unwrap().value;
        let sld = fisher::qfi(&family, theta, QfiMethod::Sld).unwrap().value;
        worst = worst.max(relative_gap(sld, eig));
        match fisher::qfi(&family, theta, QfiMethod::FiniteDifference) {
            Ok(fd) => worst = worst.max(relative_gap(fd.value, eig)).max(relative_gap(fd.value, sld)),
            Err(e) => errors.push(e.to_string()),
        }
    }
    let mut worst_pure = 0.0_f64;
    for _ in 0..50 {
        let d = rng.random_range(2..=8);
        let family = random_family(&mut rng, d, 1);
        let oracle = variance_oracle(&family);
        for method in [QfiMethod::Eigenbasis, QfiMethod::Sld] {
            worst_pure = worst_pure.max((fisher::qfi(&family, 0.0, method).unwrap().value - oracle).abs());
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = DensityMatrix::pure(&[Complex64::new(s, 0.0), Complex64::new(s, 0.0)]).unwrap();
    let sigma_z_half = HermitianOperator::new(nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Complex64::new(0.5, 0.0),
        Complex64::new(-0.5, 0.0),
    ])))
    .unwrap();
    let plus_qfi = fisher::qfi(
        &UnitaryFamily::new(plus, sigma_z_half).unwrap(),
        0.0,
        QfiMethod::Eigenbasis,
    )
    .unwrap()
    .value;
    worst_pure = worst_pure.max((plus_qfi - 1.0).abs());
    Outcome {
        passed: worst <= 1e-6 && worst_pure <= 1e-9 && errors.is_empty(),
        detail: format!(
            "100 mixed instances worst relative {worst:.3e}, 51 pure instances vs 4 Var(G) {worst_pure:.3e}, |+> gives {plus_qfi}, {} errors",
            errors.len()
        ),
    }
}

fn kernel_coupling_instance() -> Outcome {
    let rho = DensityMatrix::diagonal(&[0.7, 0.3, 0.0]).unwrap();
    let mut g = nalgebra::DMatrix::zeros(3, 3);
    g[(0, 2)] = Complex64::new(1.0, 0.0);
    g[(2, 0)] = Complex64::new(1.0, 0.0);
    let family = UnitaryFamily::new(rho, HermitianOperator::new(g).unwrap()).unwrap();
    let expected = [0.0, 2.8, 2.8];
    let mut passed = true;
    let mut rows = Vec::new();
    for (m, want) in (1..=3).zip(expected) {
        let dispatched = fisher::tqfi(&family, 0.0, m).unwrap().value;
        let fd = fisher::tqfi_fd(&family, 0.0, m, &DEFAULT_DELTAS).unwrap().value;
        passed &= (dispatched - want).abs() <= 1e-12 && relative_gap(fd, want) <= 1e-4;
        rows.push(format!("m={m}: {dispatched:.6} / fd {fd:.6}"));
    }
    let closed = fisher::tqfi_closed(&family, 2);
    passed &= matches!(closed, Err(Error::TruncationNotStrict { m: 2, rank: 2 }));
    Outcome {
        passed,
        detail: format!(
            "{}; closed form at m=2: {}",
            rows.join(", "),
            closed.map(|r| r.value.to_string()).unwrap_or_else(|e| e.to_string())
        ),
    }
}

fn all_pass(reports: &[PropertyReport], min_trials: usize) -> Outcome {
    Outcome {
        passed: reports.iter().all(|r| r.passed() && r.trials >= min_trials),
        detail: reports.iter().map(summarize).collect::<Vec<_>>().join("; "),
    }
}

fn curvature() -> Outcome {
    let rho = DensityMatrix::diagonal(&[0.5, 0.3, 0.2]).unwrap();
    let family = UnitaryFamily::new(rho, states::random_generator(3, 7)).unwrap();
    let grid = verify::halving_grid(0.02, 6);
    let profile = verify::curvature_profile(&family, 2, &grid).unwrap();
    let report = verify::check_lemma5(&family, 2, &grid).unwrap();
    let ratios_ok = profile.ratios.iter().all(|q| (0.4..=0.6).contains(q));
    let (b0, b1) = (profile.coefficients[0], profile.coefficients[1]);
    Outcome {
        passed: ratios_ok && b0.abs() <= 1e-8 && b1.abs() <= 1e-8 && report.passed(),
        detail: format!(
            "ratios {:?}, b0 {b0:.3e}, b1 {b1:.3e}, {}",
            profile.ratios.iter().map(|q| format!("{q:.3}")).collect::<Vec<_>>(),
            summarize(&report)
        ),
    }
}

fn full_suite() -> Outcome {
    let config = SuiteConfig::default();
    let start = Instant::now();
    let first = verify::run_suite(&config);
    let elapsed = start.elapsed();
    let second = verify::run_suite(&config);
    let (a, b) = (
        verify::report_json(&first).unwrap(),
        verify::report_json(&second).unwrap(),
    );
    let failed: Vec<&str> = first
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.property_id.as_str())
        .collect();
    Outcome {
        passed: verify::suite_passed(&first) && elapsed < Duration::from_secs(60) && a == b,
        detail: format!(
            "{} properties, failing {failed:?}, {:.2} s, reports identical: {}",
            first.len(),
            elapsed.as_secs_f64(),
            a == b
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<Criterion> = vec![
        ("lower-bound chain and rank equality", lemma1_chain),
        (
            "closed form, truncated SLD and finite-difference routes agree",
            route_agreement,
        ),
        ("QFI routes agree and pure states give 4 Var(G)", qfi_cross_validation),
        ("kernel-coupling qutrit sweep", kernel_coupling_instance),
        ("five structural properties", || {
            all_pass(&verify::check_lemma3(100, SEED), 100)
        }),
        ("metric axioms and half-angle identity", || {
            all_pass(&[verify::check_lemma4(500, SEED)], 500)
        }),
        ("curvature of the generalized Bures distance", curvature),
        ("truncated SLD residuals", || {
            all_pass(&[verify::check_prop1_prop2(100, SEED)], 100)
        }),
        ("full suite runtime and reproducibility", full_suite),
    ];
    let mut failed = Vec::new();
    for (i, (title, run)) in criteria.into_iter().enumerate() {
        let outcome = run();
        report(i + 1, title, &outcome);
        if !outcome.passed {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
