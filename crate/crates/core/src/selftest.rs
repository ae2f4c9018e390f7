//! Fast invariant checks over every module, run by `qfiae selftest`.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::artifact::{ModelArtifact, TrainingMeta};
use crate::fourier::{self, FourierSeries2D};
use crate::iqae::{self, IqaeConfig};
use crate::ltd::{self, Integrand, ProcessRegistry, ProcessSpec};
use crate::quad;
use crate::statevec::{Circuit, Gate, StateVector};
use crate::vqc::{self, AnsatzSpec, Dataset, QnnModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    /// First failed check, or a short summary.
    pub detail: String,
    pub seconds: f64,
}

type Check = Result<(), String>;

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn close(what: &str, got: f64, want: f64, tol: f64) -> Check {
    ensure((got - want).abs() <= tol, || format!("{what}: got {got:e}, want {want:e} (tol {tol:e})"))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn statevec_suite() -> Check {
    let bell = Circuit::with_ops(2, vec![Gate::H(0), Gate::Cnot { control: 0, target: 1 }]);
    let s = bell.run_from_zero().map_err(err)?;
    close("Bell |00>", s.amplitudes()[0].re, 0.5f64.sqrt(), 1e-12)?;
    close("Bell |11>", s.amplitudes()[3].re, 0.5f64.sqrt(), 1e-12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.gen_range(1..=6);
        let mut c = Circuit::new(n);
        for _ in 0..30 {
            let q = rng.gen_range(0..n);
            let t = rng.gen_range(-PI..PI);
            c.push(match rng.gen_range(0..4) {
                0 => Gate::H(q),
                1 => Gate::Rx(q, t),
                2 => Gate::Ry(q, t),
                _ if n > 1 => Gate::Cnot { control: q, target: (q + 1) % n },
                _ => Gate::Rz(q, t),
            });
        }
        let s = c.run_from_zero().map_err(err)?;
        close("norm after random circuit", s.norm_sqr(), 1.0, 1e-10)?;
    }
    let mut s = StateVector::zero(1).map_err(err)?;
    s.apply(&Gate::H(0)).map_err(err)?;
    let a = s.sample(0, 1000, 3).map_err(err)?;
    ensure(a == s.sample(0, 1000, 3).map_err(err)?, || "sampling not reproducible".into())
}

pub fn vqc_suite() -> Check {
    let ansatz = AnsatzSpec::with_layers(2);
    ensure(AnsatzSpec::default().total_depth() == 140, || "depth of the default ansatz".into())?;
    let model = QnnModel::random(ansatz, 4).map_err(err)?;
    let x = [0.3, 0.7];
    let shifted = [x[0] + 2.0 * PI, x[1] + 2.0 * PI];
    close("encoding period", model.forward(&shifted).map_err(err)?, model.forward(&x).map_err(err)?, 1e-10)?;
    let data = Dataset::grid_2d(3, |a, b| Ok::<_, ()>(0.2 * a - b)).map_err(|_| "dataset".to_string())?;
    let (_, adjoint) = vqc::adjoint_loss_gradient(&model, &data).map_err(err)?;
    let shift = vqc::parameter_shift_gradient(&model, &data).map_err(err)?;
    let worst = adjoint.iter().zip(&shift).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(worst < 1e-10, || format!("adjoint vs parameter shift differ by {worst:e}"))
}

/// Checks a series artifact: parses, satisfies Hermitian symmetry, and its
/// folded terms reproduce direct evaluation.
pub fn fourier_suite_on(series_text: &str) -> Check {
    let s = FourierSeries2D::from_text(series_text).map_err(err)?;
    s.check_symmetry().map_err(err)?;
    let terms = s.real_term_list().map_err(err)?;
    for x in [[0.1, 0.2], [2.0, -1.0], [5.5, 3.3]] {
        close("folded evaluation", terms.value(x), s.evaluate(x).map_err(err)?, 1e-10)?;
    }
    close("folded integral", terms.integral([(0.0, 1.0), (0.0, 1.0)]), s.analytic_integral([(0.0, 1.0), (0.0, 1.0)]), 1e-10)
}

pub fn reference_series() -> FourierSeries2D {
    FourierSeries2D::from_terms(
        3,
        [
            ((0, 0), Complex64::new(0.5, 0.0)),
            ((3, 0), Complex64::new(0.125, 0.0)),
            ((-3, 0), Complex64::new(0.125, 0.0)),
            ((1, -2), Complex64::new(0.05, -0.1)),
            ((-1, 2), Complex64::new(0.05, 0.1)),
        ],
    )
    .expect("in-band terms")
}

pub fn fourier_suite() -> Check {
    let s = reference_series();
    let again = fourier::extract(|a, b| s.evaluate([a, b]).unwrap_or(f64::NAN), 3).map_err(err)?;
    for (w, c) in s.iter() {
        close("extracted coefficient", (again.coefficient(w) - c).norm(), 0.0, 1e-12)?;
    }
    fourier_suite_on(&s.to_text())
}

pub fn iqae_suite() -> Check {
    let box_ = [(0.0, 1.0), (0.0, 1.0)];
    let t = iqae::integrate_term(1.0, (1, 0), 0.0, box_, [2, 2], &IqaeConfig::exact()).map_err(err)?;
    close("exact integral of cos(x1)", t.estimate, 1f64.sin(), 1e-9)?;
    let problem = iqae::build_sinusoid_loader((2, 1), 0.4, [2, 2], box_).map_err(err)?;
    let a = problem.exact_amplitude().map_err(err)?;
    let theta = a.sqrt().asin();
    let q = iqae::grover_operator(&problem);
    let mut state = problem.prep.run_from_zero().map_err(err)?;
    for k in 1..=3 {
        q.run_in_place(&mut state).map_err(err)?;
        let p = state.probability_one(problem.ancilla).map_err(err)?;
        close("Grover rotation", p, ((2 * k + 1) as f64 * theta).sin().powi(2), 1e-10)?;
    }
    let r = iqae::iqae_run(&iqae::AmplitudeProblem::synthetic(0.3).map_err(err)?, &IqaeConfig { seed: 1, ..Default::default() })
        .map_err(err)?;
    ensure(r.ci.0 <= r.a_hat && r.a_hat <= r.ci.1, || "estimate outside its interval".into())?;
    ensure(r.ci.1 - r.ci.0 <= 0.02 || !r.converged, || format!("interval width {}", r.ci.1 - r.ci.0))
}

pub fn ltd_suite() -> Check {
    let ones = ltd::OnShellEnergies { q_plus: [1.0; 6] };
    let unit = ProcessSpec::phi(0.0).map_err(err)?;
    close("tree-level residue at unit energies", ltd::residue_1356(&ones, &unit).map_err(err)?, 1.0 / 72.0, 1e-15)?;
    let spec = ProcessSpec::phi(0.3).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let (l1, v) = (rng.gen_range(0.0..0.6), rng.gen_range(0.0..=1.0));
        for root in ltd::resolve_three_body(l1, v, &spec) {
            ensure(root.residual.abs() <= 1e-10, || format!("three-body residual {:e} at ({l1}, {v})", root.residual))?;
        }
    }
    let integrand = Integrand::new(&ProcessSpec::phi(0.4).map_err(err)?, &ProcessRegistry::default()).map_err(err)?;
    for i in 0..16 {
        for j in 0..16 {
            let u = [(i as f64 + 0.5) / 16.0, (j as f64 + 0.5) / 16.0];
            let f = integrand.eval(u).map_err(err)?;
            ensure(f.is_finite(), || format!("integrand not finite at {u:?}"))?;
        }
    }
    Ok(())
}

pub fn quad_suite() -> Check {
    let r = quad::gauss_2d(|a, b| (-a * a - b * b).exp(), 16, 2).map_err(err)?;
    close("Gaussian integral", r.value, 0.557_746_285_351_034_4, 1e-10)?;
    let r = quad::gauss_2d(|a, b| a.powi(7) * b.powi(5), 4, 1).map_err(err)?;
    close("polynomial exactness", r.value, 1.0 / 48.0, 1e-13)
}

pub fn artifact_suite() -> Check {
    let model = QnnModel::random(AnsatzSpec::with_layers(1), 8).map_err(err)?;
    let a = ModelArtifact::new(&model, TrainingMeta { seed: 8, final_loss: 0.1, ..Default::default() });
    let back = ModelArtifact::from_toml(&a.to_toml().map_err(err)?).map_err(err)?;
    ensure(back == a, || "model artifact round trip changed values".into())
}

pub const SUITES: [(&str, fn() -> Check); 7] = [
    ("statevec", statevec_suite),
    ("vqc", vqc_suite),
    ("fourier", fourier_suite),
    ("iqae", iqae_suite),
    ("ltd", ltd_suite),
    ("quad", quad_suite),
    ("artifact", artifact_suite),
];

pub fn run_suites(suites: &[(&'static str, fn() -> Check)]) -> Vec<SuiteResult> {
    suites
        .iter()
        .map(|(name, suite)| {
            let start = Instant::now();
            let outcome = suite();
            SuiteResult {
                name,
                passed: outcome.is_ok(),
                detail: outcome.err().unwrap_or_else(|| "ok".into()),
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

pub fn run_all() -> Vec<SuiteResult> {
    run_suites(&SUITES)
}

pub fn report(results: &[SuiteResult]) -> String {
    results
        .iter()
        .map(|r| format!("{:<9} {} {:>7.2}s  {}\n", r.name, if r.passed { "PASS" } else { "FAIL" }, r.seconds, r.detail))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_build_passes_every_suite() {
        let results = run_all();
        assert!(results.iter().all(|r| r.passed), "{}", report(&results));
        assert_eq!(results.len(), SUITES.len());
    }

    #[test]
    fn corrupted_series_fails_the_fourier_suite() {
        let text = reference_series().to_text();
        // Break the conjugate pairing of one coefficient.
        let corrupted = text.replacen("-1 2 5e-2 1e-1", "-1 2 5e-2 3e-1", 1);
        assert_ne!(corrupted, text, "fixture line not found in:\n{text}");
        assert!(fourier_suite_on(&text).is_ok());
        assert!(fourier_suite_on(&corrupted).is_err());
    }
}
