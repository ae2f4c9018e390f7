//! Iterative amplitude estimation and the sinusoid loaders it integrates.
//!
//! Angles follow the normalized convention `a = sin^2(2 pi theta)` with
//! `theta` in `[0, 1/4]`. Running `Q^k A` gives ancilla-one probability
//! `sin^2((4k + 2) pi theta)`, so each round pins `(4k + 2) theta` modulo one
//! to a half-circle.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::{FourierError, FourierSeries2D};
use crate::statevec::{Circuit, Gate, SimError, StateVector, MAX_QUBITS};

pub type Bounds = [(f64, f64); 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IqaeError {
    #[error("frequency {omega} on a dimension with zero grid bits")]
    NoGridBits { omega: i64 },
    #[error("{0} qubits exceed the simulator limit")]
    TooManyQubits(usize),
    #[error("invalid amplitude {0}")]
    Amplitude(f64),
    #[error("invalid IQAE config: {0}")]
    Config(String),
    #[error("term ({0}, {1}) is ill-conditioned: sinc factor {2:.3e} below 0.1, increase grid bits")]
    IllConditioned(i64, i64, f64),
    #[error("invalid integration box")]
    Box,
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A state preparation whose ancilla-one probability is the amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeProblem {
    pub prep: Circuit,
    pub ancilla: usize,
    pub grid_bits: [usize; 2],
    pub domain: Bounds,
    pub true_target: Option<f64>,
}

impl AmplitudeProblem {
    /// One ancilla qubit rotated so that `P(1) = a`.
    pub fn synthetic(a: f64) -> Result<Self, IqaeError> {
        if !(0.0..=1.0).contains(&a) {
            return Err(IqaeError::Amplitude(a));
        }
        let mut prep = Circuit::new(1);
        prep.push(Gate::Ry(0, 2.0 * a.sqrt().asin()));
        Ok(Self { prep, ancilla: 0, grid_bits: [0, 0], domain: [(0.0, 1.0); 2], true_target: Some(a) })
    }

    pub fn n_qubits(&self) -> usize {
        self.prep.n_qubits()
    }

    /// `P(ancilla = 1)` after the preparation alone.
    pub fn exact_amplitude(&self) -> Result<f64, IqaeError> {
        Ok(self.prep.run_from_zero()?.probability_one(self.ancilla)?)
    }
}

fn check_bounds(domain: &Bounds) -> Result<(), IqaeError> {
    if domain.iter().all(|(a, b)| a.is_finite() && b.is_finite() && a <= b) {
        Ok(())
    } else {
        Err(IqaeError::Box)
    }
}

/// Loader with ancilla-one probability equal to the mean of
/// `(1 + cos(omega . x_i + phi)) / 2` over all cell midpoints `x_i`.
/// Dimension 1 uses qubits `0..b1`, dimension 2 the next `b2`, and the
/// ancilla comes last. Grid bit `j` weights `2^j` cells.
pub fn build_sinusoid_loader(
    omega: (i64, i64),
    phase: f64,
    grid_bits: [usize; 2],
    domain: Bounds,
) -> Result<AmplitudeProblem, IqaeError> {
    check_bounds(&domain)?;
    let omegas = [omega.0, omega.1];
    for d in 0..2 {
        if grid_bits[d] == 0 && omegas[d] != 0 {
            return Err(IqaeError::NoGridBits { omega: omegas[d] });
        }
    }
    let n = grid_bits[0] + grid_bits[1] + 1;
    if n > MAX_QUBITS {
        return Err(IqaeError::TooManyQubits(n));
    }
    let ancilla = n - 1;
    let mut prep = Circuit::new(n);
    for q in 0..ancilla {
        prep.push(Gate::H(q));
    }
    let mut offset = phase + std::f64::consts::PI;
    let mut first = 0;
    for d in 0..2 {
        let cells = (1u64 << grid_bits[d]) as f64;
        let width = (domain[d].1 - domain[d].0) / cells;
        let w = omegas[d] as f64;
        offset += w * (domain[d].0 + 0.5 * width);
        for j in 0..grid_bits[d] {
            if omegas[d] != 0 {
                let angle = w * width * (1u64 << j) as f64;
                prep.push(Gate::Cry { control: first + j, target: ancilla, angle });
            }
        }
        first += grid_bits[d];
    }
    prep.push(Gate::Ry(ancilla, offset));
    Ok(AmplitudeProblem { prep, ancilla, grid_bits, domain, true_target: None })
}

/// `Q = A S0 A^dagger S_good`, with `S_good = Z` on the ancilla and `S0`
/// flipping the sign of the all-zeros state. Agrees with the textbook
/// operator up to a global sign.
pub fn grover_operator(problem: &AmplitudeProblem) -> Circuit {
    let n = problem.n_qubits();
    let mut q = Circuit::new(n);
    q.push(Gate::Z(problem.ancilla));
    q.append(&problem.prep.inverse()).expect("same width");
    for i in 0..n {
        q.push(Gate::X(i));
    }
    q.push(Gate::McZ { mask: ((1u64 << n) - 1) as u32 });
    for i in 0..n {
        q.push(Gate::X(i));
    }
    q.append(&problem.prep).expect("same width");
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMode {
    /// Binomial shot sampling of the ancilla.
    Sampled,
    /// The ancilla probability is read from the statevector.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IqaeConfig {
    /// Target half-width of the amplitude interval.
    pub epsilon: f64,
    pub alpha: f64,
    pub shots: u64,
    pub max_rounds: usize,
    pub mode: EstimationMode,
    pub seed: u64,
}

impl Default for IqaeConfig {
    fn default() -> Self {
        Self { epsilon: 0.01, alpha: 0.05, shots: 1000, max_rounds: 100, mode: EstimationMode::Sampled, seed: 0 }
    }
}

impl IqaeConfig {
    pub fn exact() -> Self {
        Self { mode: EstimationMode::Exact, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), IqaeError> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(IqaeError::Config(format!("epsilon {} not in (0, 0.5)", self.epsilon)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(IqaeError::Config(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if self.shots == 0 {
            return Err(IqaeError::Config("shots must be positive".into()));
        }
        if self.max_rounds == 0 {
            return Err(IqaeError::Config("max_rounds must be positive".into()));
        }
        Ok(())
    }

    /// Upper bound on the number of distinct Grover powers, over which
    /// `alpha` is split evenly.
    pub fn round_budget(&self) -> usize {
        const MIN_RATIO: f64 = 2.0;
        ((MIN_RATIO * std::f64::consts::PI / (8.0 * self.epsilon)).ln() / MIN_RATIO.ln()).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqaeResult {
    pub a_hat: f64,
    pub ci: (f64, f64),
    /// Applications of `A` or `Q`: each shot of `Q^k A` counts `k + 1`.
    pub oracle_queries: u64,
    pub rounds: usize,
    /// False when `max_rounds` stopped the run before the target width.
    pub converged: bool,
    /// Interval on normalized theta after each round.
    pub theta_history: Vec<(f64, f64)>,
}

impl IqaeResult {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci.1 - self.ci.0)
    }
}

fn amplitude_of(theta: f64) -> f64 {
    (2.0 * std::f64::consts::PI * theta).sin().powi(2)
}

/// Largest `k` whose scaled interval `(4k + 2)[lo, hi]` sits inside one
/// half-circle, if it at least doubles the current scaling.
fn find_next_k(k: u64, upper: bool, (lo, hi): (f64, f64)) -> (u64, bool) {
    let old = (4 * k + 2) as f64;
    let width = hi - lo;
    if width <= 0.0 {
        return (k, upper);
    }
    let max_scaling = (1.0 / (2.0 * width)).floor().min(1e12) as i64;
    let mut scaling = max_scaling - (max_scaling - 2).rem_euclid(4);
    while scaling as f64 >= 2.0 * old {
        let s = scaling as f64;
        let t_lo = s * lo - (s * lo).floor();
        let t_hi = s * hi - (s * hi).floor();
        if t_lo <= t_hi && t_hi <= 0.5 {
            return (((scaling - 2) / 4) as u64, true);
        }
        if t_hi >= t_lo && t_lo >= 0.5 {
            return (((scaling - 2) / 4) as u64, false);
        }
        scaling -= 4;
    }
    (k, upper)
}

const LOOKS_PER_ROUND: u32 = 4;

/// Intersects `interval` with the Chernoff-Hoeffding interval implied by
/// `ones` of `total` shots on `Q^k A`.
fn tighten(interval: (f64, f64), k: u64, upper: bool, ones: u64, total: u64, budget: f64, alpha: f64) -> (f64, f64) {
    let prob = ones as f64 / total as f64;
    let radius = ((2.0 * budget / alpha).ln() / (2.0 * total as f64)).sqrt();
    let (a_min, a_max) = ((prob - radius).max(0.0), (prob + radius).min(1.0));
    let arc = |a: f64| (1.0 - 2.0 * a).acos() / (2.0 * std::f64::consts::PI);
    let (t_min, t_max) = if upper { (arc(a_min), arc(a_max)) } else { (1.0 - arc(a_max), 1.0 - arc(a_min)) };
    let scaling = (4 * k + 2) as f64;
    let lo = (((scaling * interval.0).floor() + t_min) / scaling).max(interval.0);
    let hi = (((scaling * interval.1).floor() + t_max) / scaling).min(interval.1);
    if lo <= hi {
        (lo, hi)
    } else {
        let mid = 0.5 * (lo + hi);
        (mid, mid)
    }
}

fn probability_after(problem: &AmplitudeProblem, grover: &Circuit, k: u64) -> Result<f64, IqaeError> {
    let mut state = StateVector::zero(problem.n_qubits())?;
    problem.prep.run_in_place(&mut state)?;
    for _ in 0..k {
        grover.run_in_place(&mut state)?;
    }
    Ok(state.probability_one(problem.ancilla)?)
}

pub fn iqae_run(problem: &AmplitudeProblem, config: &IqaeConfig) -> Result<IqaeResult, IqaeError> {
    config.validate()?;
    problem.prep.validate()?;
    if config.mode == EstimationMode::Exact {
        let a = problem.exact_amplitude()?.clamp(0.0, 1.0);
        let theta = a.sqrt().asin() / (2.0 * std::f64::consts::PI);
        return Ok(IqaeResult {
            a_hat: a,
            ci: (a, a),
            oracle_queries: 1,
            rounds: 1,
            converged: true,
            theta_history: vec![(theta, theta)],
        });
    }

    let grover = grover_operator(problem);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let budget = (config.round_budget() * LOOKS_PER_ROUND as usize) as f64;
    let target = config.epsilon / std::f64::consts::PI;
    let mut interval = (0.0, 0.25);
    let mut history = Vec::new();
    let (mut k, mut upper) = (0u64, true);
    let (mut ones, mut total) = (0u64, 0u64);
    let mut queries = 0u64;
    let mut rounds = 0;
    while interval.1 - interval.0 > target {
        if rounds == config.max_rounds {
            break;
        }
        rounds += 1;
        let (next_k, next_upper) = find_next_k(k, upper, interval);
        if next_k != k || total == 0 {
            ones = 0;
            total = 0;
        }
        k = next_k;
        upper = next_upper;

        // Shots arrive in doubling batches so the last round can stop once
        // the target width is reached; every look is charged to alpha.
        let p = probability_after(problem, &grover, k)?;
        let mut taken = 0;
        let mut next = interval;
        for look in 0..LOOKS_PER_ROUND {
            let upto = config.shots >> (LOOKS_PER_ROUND - 1 - look);
            if upto <= taken {
                continue;
            }
            ones += crate::statevec::sample_binomial(p, upto - taken, rng.next_u64());
            total += upto - taken;
            queries += (upto - taken) * (k + 1);
            taken = upto;
            next = tighten(interval, k, upper, ones, total, budget, config.alpha);
            if next.1 - next.0 <= target {
                break;
            }
        }
        interval = next;
        history.push(interval);
    }
    let converged = interval.1 - interval.0 <= target;
    let ci = (amplitude_of(interval.0), amplitude_of(interval.1));
    Ok(IqaeResult {
        a_hat: 0.5 * (ci.0 + ci.1),
        ci,
        oracle_queries: queries,
        rounds,
        converged,
        theta_history: history,
    })
}

fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

/// Per-dimension factors `sinc(omega_d Delta_d / 2)` relating the midpoint
/// mean of a sinusoid to its exact box average.
pub fn sinc_factors(omega: (i64, i64), grid_bits: [usize; 2], domain: &Bounds) -> [f64; 2] {
    let omegas = [omega.0, omega.1];
    std::array::from_fn(|d| {
        let width = (domain[d].1 - domain[d].0) / (1u64 << grid_bits[d]) as f64;
        sinc(omegas[d] as f64 * width / 2.0)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermReport {
    pub omega: (i64, i64),
    pub amplitude: f64,
    pub phase: f64,
    pub a_hat: f64,
    pub ci: (f64, f64),
    pub queries: u64,
    pub rounds: usize,
    pub sinc_factor: f64,
    pub skipped: bool,
    pub converged: bool,
    pub estimate: f64,
    pub half_width: f64,
}

/// Integral of `amplitude * cos(omega . x + phase)` over `domain`.
pub fn integrate_term(
    amplitude: f64,
    omega: (i64, i64),
    phase: f64,
    domain: Bounds,
    grid_bits: [usize; 2],
    config: &IqaeConfig,
) -> Result<TermReport, IqaeError> {
    let factors = sinc_factors(omega, grid_bits, &domain);
    if let Some(&f) = factors.iter().find(|f| f.abs() < 0.1) {
        return Err(IqaeError::IllConditioned(omega.0, omega.1, f));
    }
    let problem = build_sinusoid_loader(omega, phase, grid_bits, domain)?;
    let result = iqae_run(&problem, config)?;
    let volume = (domain[0].1 - domain[0].0) * (domain[1].1 - domain[1].0);
    let factor = factors[0] * factors[1];
    let scale = amplitude * volume * factor;
    Ok(TermReport {
        omega,
        amplitude,
        phase,
        a_hat: result.a_hat,
        ci: result.ci,
        queries: result.oracle_queries,
        rounds: result.rounds,
        sinc_factor: factor,
        skipped: false,
        converged: result.converged,
        estimate: scale * (2.0 * result.a_hat - 1.0),
        half_width: (scale * (result.ci.1 - result.ci.0)).abs(),
    })
}

/// Seed for one term, independent of the order terms are processed in.
pub fn term_seed(seed: u64, omega: (i64, i64)) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((omega.0 as u64) << 32) ^ (omega.1 as u32 as u64));
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesEstimate {
    pub total: f64,
    /// Root-sum-square of the per-term half-widths.
    pub half_width: f64,
    /// Closed-form integral of the constant term.
    pub constant: f64,
    pub terms: Vec<TermReport>,
}

impl SeriesEstimate {
    pub fn oracle_queries(&self) -> u64 {
        self.terms.iter().map(|t| t.queries).sum()
    }

    pub fn all_converged(&self) -> bool {
        self.terms.iter().all(|t| t.converged)
    }
}

/// Relative amplitude below which a term is skipped.
pub const SKIP_RATIO: f64 = 1e-6;

pub fn integrate_series(
    series: &FourierSeries2D,
    domain: Bounds,
    grid_bits: [usize; 2],
    config: &IqaeConfig,
) -> Result<SeriesEstimate, IqaeError> {
    config.validate()?;
    check_bounds(&domain)?;
    let list = series.real_term_list()?;
    let volume = (domain[0].1 - domain[0].0) * (domain[1].1 - domain[1].0);
    let constant = list.constant * volume;
    let largest = list.terms.iter().map(|t| t.amplitude).fold(0.0, f64::max);
    let mut reports = Vec::with_capacity(list.terms.len());
    let (mut total, mut var) = (constant, 0.0);
    for term in &list.terms {
        if term.amplitude < SKIP_RATIO * largest {
            reports.push(TermReport {
                omega: term.omega,
                amplitude: term.amplitude,
                phase: term.phase,
                a_hat: f64::NAN,
                ci: (f64::NAN, f64::NAN),
                queries: 0,
                rounds: 0,
                sinc_factor: {
                    let f = sinc_factors(term.omega, grid_bits, &domain);
                    f[0] * f[1]
                },
                skipped: true,
                converged: true,
                estimate: 0.0,
                half_width: 0.0,
            });
            continue;
        }
        let cfg = IqaeConfig { seed: term_seed(config.seed, term.omega), ..*config };
        let report = integrate_term(term.amplitude, term.omega, term.phase, domain, grid_bits, &cfg)?;
        total += report.estimate;
        var += report.half_width * report.half_width;
        reports.push(report);
    }
    Ok(SeriesEstimate { total, half_width: var.sqrt(), constant, terms: reports })
}
