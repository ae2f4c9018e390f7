//! Acceptance criteria A1-A7. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; the process fails if any criterion
//! does.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qfiae::config::RunConfig;
use qfiae::fourier::{self, FourierSeries2D};
use qfiae::iqae::{self, AmplitudeProblem, IqaeConfig};
use qfiae::ltd::{self, Integrand, ProcessRegistry, ProcessSpec};
use qfiae::pipeline;
use qfiae::quad;
use qfiae::vqc::{self, AnsatzSpec, Dataset, QnnModel, TrainConfig};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

const UNIT_BOX: [(f64, f64); 2] = [(0.0, 1.0), (0.0, 1.0)];
const SCAN: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

fn a1() -> Verdict {
    let mut worst_coverage: f64 = 1.0;
    let mut widest: f64 = 0.0;
    let mut unconverged = 0;
    for a in [0.1, 0.25, 0.5] {
        let problem = AmplitudeProblem::synthetic(a).unwrap();
        let mut covered = 0;
        for seed in 0..200 {
            let r = iqae::iqae_run(&problem, &IqaeConfig { seed, ..IqaeConfig::default() }).unwrap();
            if r.ci.0 <= a && a <= r.ci.1 {
                covered += 1;
            }
            if r.converged {
                widest = widest.max(r.ci.1 - r.ci.0);
            } else {
                unconverged += 1;
            }
        }
        worst_coverage = worst_coverage.min(covered as f64 / 200.0);
    }
    verdict(
        worst_coverage >= 0.92 && widest <= 0.02,
        format!("min coverage {worst_coverage:.3} (>= 0.92), max width {widest:.4} (<= 0.02), {unconverged} unconverged"),
    )
}

/// `0.5 + 0.3 cos x1 + 0.2 sin 2 x2`.
fn a2_series() -> FourierSeries2D {
    FourierSeries2D::from_terms(
        2,
        [
            ((0, 0), Complex64::new(0.5, 0.0)),
            ((1, 0), Complex64::new(0.15, 0.0)),
            ((-1, 0), Complex64::new(0.15, 0.0)),
            ((0, 2), Complex64::new(0.0, -0.1)),
            ((0, -2), Complex64::new(0.0, 0.1)),
        ],
    )
    .unwrap()
}

fn a2() -> Verdict {
    let term = iqae::integrate_term(1.0, (1, 0), 0.0, UNIT_BOX, [2, 2], &IqaeConfig::exact()).unwrap();
    let term_err = (term.estimate - 1f64.sin()).abs();
    // Antiderivatives by hand: int cos = sin, int sin(2x) = (1 - cos 2) / 2.
    let truth = 0.5 + 0.3 * 1f64.sin() + 0.2 * (1.0 - 2f64.cos()) / 2.0;
    let series = a2_series();
    let exact = iqae::integrate_series(&series, UNIT_BOX, [2, 2], &IqaeConfig::exact()).unwrap();
    let series_err = (exact.total - truth).abs();
    let mut covered = 0;
    for seed in 0..200 {
        let r = iqae::integrate_series(&series, UNIT_BOX, [2, 2], &IqaeConfig { seed, ..IqaeConfig::default() }).unwrap();
        if (r.total - truth).abs() <= r.half_width {
            covered += 1;
        }
    }
    let coverage = covered as f64 / 200.0;
    verdict(
        term_err <= 1e-9 && series_err <= 1e-8 && coverage >= 0.92,
        format!("cos term error {term_err:.1e} (<= 1e-9), series error {series_err:.1e} (<= 1e-8), shot coverage {coverage:.3} (>= 0.92)"),
    )
}

fn a3() -> Verdict {
    let target = |a: f64, b: f64| Ok::<_, ()>(0.4 + 0.25 * (3.0 * a).sin() * (2.0 * b).cos());
    let data = Dataset::grid_2d(16, target).unwrap();
    let ansatz = AnsatzSpec::default();
    let init = QnnModel::random(ansatz, 1).unwrap();
    let config = TrainConfig { seed: 1, target_loss: Some(1e-3), ..TrainConfig::default() };
    let report = vqc::train(&init, &data, &config).unwrap();

    // Central differences of the loss on 20 random angles.
    let probe = QnnModel::random(ansatz, 9).unwrap();
    let small = Dataset::grid_2d(4, target).unwrap();
    let shift = vqc::parameter_shift_gradient(&probe, &small).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut null = 0;
    for _ in 0..20 {
        let k = rng.gen_range(0..ansatz.n_params());
        let mut plus = probe.clone();
        plus.params.as_mut_slice()[k] += h;
        let mut minus = probe.clone();
        minus.params.as_mut_slice()[k] -= h;
        let fd = (plus.loss(&small).unwrap() - minus.loss(&small).unwrap()) / (2.0 * h);
        // Some angles (a leading RZ on |0>) have an exactly zero gradient;
        // the floor keeps their round-off from reading as a relative error.
        let scale = fd.abs().max(shift[k].abs()).max(1e-6);
        if scale == 1e-6 {
            null += 1;
        }
        worst = worst.max((shift[k] - fd).abs() / scale);
    }
    verdict(
        report.best_loss <= 1e-3 && worst <= 1e-5,
        format!(
            "MSE {:.2e} after {} steps (<= 1e-3), gradient rel error {worst:.1e} (<= 1e-5, {null} of 20 angles with zero gradient)",
            report.best_loss,
            report.steps_executed()
        ),
    )
}

fn random_series(rng: &mut ChaCha8Rng, n: i64) -> FourierSeries2D {
    let mut terms = vec![((0, 0), Complex64::new(rng.gen_range(-1.0..1.0), 0.0))];
    for w1 in -n..=n {
        for w2 in -n..=n {
            if (w1, w2) > (0, 0) {
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                terms.push(((w1, w2), c));
                terms.push(((-w1, -w2), c.conj()));
            }
        }
    }
    FourierSeries2D::from_terms(n as usize, terms).unwrap()
}

fn a4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut coeff_err: f64 = 0.0;
    for n in 1..=5 {
        let s = random_series(&mut rng, n);
        let back = fourier::extract(|a, b| s.evaluate([a, b]).unwrap(), n as usize).unwrap();
        for (w, c) in s.iter() {
            coeff_err = coeff_err.max((back.coefficient(w) - c).norm());
        }
    }

    let model = QnnModel::random(AnsatzSpec::default(), 6).unwrap();
    let series = pipeline::model_series(&model).unwrap();
    let n_fresh = 101;
    let inputs: Vec<Vec<f64>> =
        (0..n_fresh * n_fresh).map(|i| vec![(i / n_fresh) as f64 / n_fresh as f64, (i % n_fresh) as f64 / n_fresh as f64]).collect();
    let direct = model.forward_batch(&inputs).unwrap();
    let mse = inputs
        .iter()
        .zip(&direct)
        .map(|(x, y)| (series.evaluate([x[0], x[1]]).unwrap() - y).powi(2))
        .sum::<f64>()
        / direct.len() as f64;

    let mut integral_err: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(1..=5);
        let s = random_series(&mut rng, n);
        let q = quad::gauss_2d(|a, b| s.evaluate([a, b]).unwrap(), 16, 2).unwrap();
        integral_err = integral_err.max((q.value - s.analytic_integral(UNIT_BOX)).abs());
    }
    verdict(
        coeff_err <= 1e-12 && mse <= 1e-8 && integral_err <= 1e-8,
        format!(
            "coefficient error {coeff_err:.1e} (<= 1e-12), QNN reconstruction MSE {mse:.1e} at n_max {} (<= 1e-8), closed form vs quadrature {integral_err:.1e} (<= 1e-8)",
            series.n_max()
        ),
    )
}

/// Training budget for the end-to-end check; see the README.
const A5_STEPS: usize = 600;

fn a5() -> Verdict {
    let registry = ProcessRegistry::default();
    let mut config = RunConfig { exact: true, seed: 7, ..RunConfig::default() };
    config.qnn.max_steps = A5_STEPS;
    config.qnn.restarts = 1;
    let mut ok = true;
    let mut oracle_values = Vec::new();
    let mut parts = Vec::new();
    for m in SCAN {
        let o = pipeline::oracle(&config, m, &registry).unwrap();
        let fit = pipeline::fit(&config, m, &registry).unwrap();
        let q = pipeline::integrate_model(&config, &fit.model).unwrap();
        let gap = (q.estimate - o.value).abs();
        let allowed = (0.05 * o.value.abs()).max(0.002);
        ok &= gap <= allowed;
        oracle_values.push(o.value);
        parts.push(format!("{m}: qfiae {:.3e} oracle {:.3e} gap {gap:.1e}/{allowed:.1e}", q.estimate, o.value));
    }
    let increasing = oracle_values.windows(2).all(|w| w[1] > w[0]);
    verdict(ok && increasing, format!("{}; oracle increasing: {increasing}", parts.join("; ")))
}

fn a6() -> Verdict {
    let registry = ProcessRegistry::default();
    let config = RunConfig::default();
    let mut finite = true;
    let mut worst_doubling: f64 = 0.0;
    let mut three_body = [Vec::new(), Vec::new()];
    for m in SCAN {
        let integrand = Integrand::new(&ProcessSpec::phi(m).unwrap(), &registry).unwrap();
        for i in 0..128 {
            for j in 0..128 {
                let u = [(i as f64 + 0.5) / 128.0, (j as f64 + 0.5) / 128.0];
                finite &= integrand.eval(u).is_ok_and(f64::is_finite);
            }
        }
        let o = pipeline::oracle(&config, m, &registry).unwrap();
        worst_doubling = worst_doubling.max(o.doubling_change());
        for (k, panels) in [config.oracle.panels, 2 * config.oracle.panels].into_iter().enumerate() {
            let mut f = |u, v| integrand.parts([u, v]).unwrap().three_body;
            let (value, _) =
                quad::nested_gauss_fixed(&mut f, &|v| integrand.u1_breakpoints(v), config.oracle.order, panels).unwrap();
            three_body[k].push(value);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_residual: f64 = 0.0;
    let mut roots = 0;
    for _ in 0..10_000 {
        let spec = ProcessSpec::phi(rng.gen_range(0.0..0.99)).unwrap();
        let (l1, v) = (rng.gen_range(0.0..spec.sqrt_s), rng.gen_range(0.0..=1.0));
        for r in ltd::resolve_three_body(l1, v, &spec) {
            worst_residual = worst_residual.max(r.residual.abs());
            roots += 1;
        }
    }
    let decreasing = three_body.iter().all(|t| t.windows(2).all(|w| w[1] < w[0]));
    verdict(
        finite && worst_doubling < 1e-3 && worst_residual <= 1e-10 && decreasing,
        format!(
            "128x128 finite: {finite}, doubling change {worst_doubling:.1e} (< 1e-3), three-body residual {worst_residual:.1e} over {roots} roots (<= 1e-10), three-body part decreasing: {decreasing} {:?}",
            three_body[0]
        ),
    )
}

fn a7() -> Verdict {
    let problem = AmplitudeProblem::synthetic(0.3).unwrap();
    let mean_queries = |epsilon: f64| {
        (0..20)
            .map(|seed| iqae::iqae_run(&problem, &IqaeConfig { epsilon, seed, ..IqaeConfig::default() }).unwrap().oracle_queries)
            .sum::<u64>() as f64
            / 20.0
    };
    let (fine, coarse) = (mean_queries(0.005), mean_queries(0.01));
    let ratio = fine / coarse;
    verdict(ratio <= 3.0, format!("queries {fine:.0} / {coarse:.0} = {ratio:.2} (<= 3)"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict, u64); 7] = [
        ("A1", a1, 120),
        ("A2", a2, 60),
        ("A3", a3, 1200),
        ("A4", a4, 60),
        ("A5", a5, 4 * 45 * 60),
        ("A6", a6, 120),
        ("A7", a7, 60),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let passed = v.passed && in_time;
        failed += usize::from(!passed);
        println!(
            "{name} {} ({:.1}s of {budget}s) {}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            v.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
