//! Truncated two-dimensional Fourier series of periodic functions on
//! `[0, 2pi)^2`: extraction by DFT, evaluation, closed-form integrals, and a
//! plain-text artifact format.
//!
//! Series text format (blank lines and `#` comments ignored):
//!
//! ```text
//! n_max 2
//! terms 2
//! 1 0 5e-1 0e0
//! -1 0 5e-1 0e0
//! ```
//!
//! Each term row is `omega1 omega2 re im`. Writers keep only `|c| > 1e-12`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

/// Largest truncation order accepted by constructors and the parser.
pub const MAX_N_MAX: usize = 256;
/// Coefficients at or below this magnitude are not written to artifacts.
pub const STORE_THRESHOLD: f64 = 1e-12;
/// Tolerance of the Hermitian-symmetry check guarding evaluation and folding.
pub const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("n_max {0} exceeds {MAX_N_MAX}")]
    TooLarge(usize),
    #[error("frequency ({0}, {1}) outside the band")]
    OutOfBand(i64, i64),
    #[error("coefficients violate Hermitian symmetry by {0:e}")]
    Symmetry(f64),
    #[error("non-finite sample or coefficient")]
    NonFinite,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Dense coefficient table `c[(omega1, omega2)]` for `|omega_d| <= n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries2D {
    n_max: usize,
    coeffs: Vec<Complex64>,
}

impl FourierSeries2D {
    pub fn zeros(n_max: usize) -> Result<Self, FourierError> {
        if n_max > MAX_N_MAX {
            return Err(FourierError::TooLarge(n_max));
        }
        let side = 2 * n_max + 1;
        Ok(Self { n_max, coeffs: vec![Complex64::new(0.0, 0.0); side * side] })
    }

    pub fn from_terms(
        n_max: usize,
        terms: impl IntoIterator<Item = ((i64, i64), Complex64)>,
    ) -> Result<Self, FourierError> {
        let mut s = Self::zeros(n_max)?;
        for (w, c) in terms {
            s.set(w, c)?;
        }
        Ok(s)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    fn side(&self) -> usize {
        2 * self.n_max + 1
    }

    fn slot(&self, (w1, w2): (i64, i64)) -> Option<usize> {
        let n = self.n_max as i64;
        if w1.abs() > n || w2.abs() > n {
            return None;
        }
        Some(((w1 + n) as usize) * self.side() + (w2 + n) as usize)
    }

    /// Zero for frequencies outside the band.
    pub fn coefficient(&self, w: (i64, i64)) -> Complex64 {
        self.slot(w).map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    pub fn set(&mut self, w: (i64, i64), c: Complex64) -> Result<(), FourierError> {
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Err(FourierError::NonFinite);
        }
        let i = self.slot(w).ok_or(FourierError::OutOfBand(w.0, w.1))?;
        self.coeffs[i] = c;
        Ok(())
    }

    /// All `(omega, c)` pairs in the band, including zeros.
    pub fn iter(&self) -> impl Iterator<Item = ((i64, i64), Complex64)> + '_ {
        let n = self.n_max as i64;
        let side = self.side();
        self.coeffs.iter().enumerate().map(move |(i, c)| (((i / side) as i64 - n, (i % side) as i64 - n), *c))
    }

    /// Largest `|c_omega - conj(c_{-omega})|`.
    pub fn symmetry_defect(&self) -> f64 {
        self.iter()
            .map(|((w1, w2), c)| (c - self.coefficient((-w1, -w2)).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn check_symmetry(&self) -> Result<(), FourierError> {
        let d = self.symmetry_defect();
        if d > SYMMETRY_TOL || d.is_nan() {
            return Err(FourierError::Symmetry(d));
        }
        Ok(())
    }

    /// Sum of `|c|^2` over every coefficient.
    pub fn power(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Sum of `|c|^2` over coefficients with `max(|omega1|, |omega2|) > n`.
    pub fn out_of_band_power(&self, n: usize) -> f64 {
        let n = n as i64;
        self.iter().filter(|((a, b), _)| a.abs() > n || b.abs() > n).map(|(_, c)| c.norm_sqr()).sum()
    }

    /// Keeps only `|omega_d| <= n`; a larger `n` leaves the series unchanged.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.n_max);
        let mut out = Self::zeros(n).expect("n <= n_max");
        let bound = n as i64;
        for w1 in -bound..=bound {
            for w2 in -bound..=bound {
                let c = self.coefficient((w1, w2));
                let i = out.slot((w1, w2)).expect("in band");
                out.coeffs[i] = c;
            }
        }
        out
    }

    /// Complex value of the series at `x`, without a symmetry check.
    pub fn evaluate_complex(&self, x: [f64; 2]) -> Complex64 {
        let n = self.n_max as i64;
        let side = self.side();
        let phases = |t: f64| -> Vec<Complex64> {
            (-n..=n).map(|w| Complex64::from_polar(1.0, w as f64 * t)).collect()
        };
        let (e1, e2) = (phases(x[0]), phases(x[1]));
        let mut acc = Complex64::new(0.0, 0.0);
        for (row, p1) in self.coeffs.chunks_exact(side).zip(&e1) {
            let inner: Complex64 = row.iter().zip(&e2).map(|(c, p2)| c * p2).sum();
            acc += p1 * inner;
        }
        acc
    }

    /// `sum_omega c_omega exp(i omega . x)`; fails if the coefficients are not
    /// Hermitian to within [`SYMMETRY_TOL`].
    pub fn evaluate(&self, x: [f64; 2]) -> Result<f64, FourierError> {
        self.check_symmetry()?;
        Ok(self.evaluate_complex(x).re)
    }

    /// Exact integral over `[a1, b1] x [a2, b2]`.
    pub fn analytic_integral(&self, bounds: [(f64, f64); 2]) -> f64 {
        let n = self.n_max as i64;
        let f1: Vec<Complex64> = (-n..=n).map(|w| exp_integral(w, bounds[0])).collect();
        let f2: Vec<Complex64> = (-n..=n).map(|w| exp_integral(w, bounds[1])).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (row, g1) in self.coeffs.chunks_exact(self.side()).zip(&f1) {
            let inner: Complex64 = row.iter().zip(&f2).map(|(c, g2)| c * g2).sum();
            acc += g1 * inner;
        }
        acc.re
    }

    /// Folds each conjugate pair into `A cos(omega . x + phi)`.
    pub fn real_term_list(&self) -> Result<TermList, FourierError> {
        self.check_symmetry()?;
        let terms = self
            .iter()
            .filter(|((w1, w2), c)| (*w1 > 0 || (*w1 == 0 && *w2 > 0)) && c.norm() > 0.0)
            .map(|(omega, c)| RealTerm { amplitude: 2.0 * c.norm(), omega, phase: c.arg() })
            .collect();
        Ok(TermList { constant: self.coefficient((0, 0)).re, terms })
    }

    pub fn to_text(&self) -> String {
        let kept: Vec<_> = self.iter().filter(|(_, c)| c.norm() > STORE_THRESHOLD).collect();
        let mut out = String::new();
        writeln!(out, "n_max {}", self.n_max).unwrap();
        writeln!(out, "terms {}", kept.len()).unwrap();
        for ((w1, w2), c) in kept {
            writeln!(out, "{w1} {w2} {:e} {:e}", c.re, c.im).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FourierError> {
        let err = |line: usize, msg: &str| FourierError::Parse { line, msg: msg.to_string() };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let mut header = |key: &str| -> Result<usize, FourierError> {
            let (no, line) = lines.next().ok_or_else(|| err(0, &format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(err(no, &format!("expected `{key}`")));
            }
            let value = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(no, "bad count"))?;
            if parts.next().is_some() {
                return Err(err(no, "trailing fields"));
            }
            Ok(value)
        };
        let n_max = header("n_max")?;
        let count = header("terms")?;
        let mut series = Self::zeros(n_max).map_err(|e| err(1, &e.to_string()))?;
        let mut seen = vec![false; series.coeffs.len()];
        let mut read = 0;
        for (no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(no, "expected `omega1 omega2 re im`"));
            }
            let w1: i64 = fields[0].parse().map_err(|_| err(no, "bad omega1"))?;
            let w2: i64 = fields[1].parse().map_err(|_| err(no, "bad omega2"))?;
            let re: f64 = fields[2].parse().map_err(|_| err(no, "bad real part"))?;
            let im: f64 = fields[3].parse().map_err(|_| err(no, "bad imaginary part"))?;
            let slot = series.slot((w1, w2)).ok_or_else(|| err(no, "frequency outside n_max"))?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(err(no, "duplicate frequency"));
            }
            series.set((w1, w2), Complex64::new(re, im)).map_err(|e| err(no, &e.to_string()))?;
            read += 1;
        }
        if read != count {
            return Err(err(0, &format!("declared {count} terms, found {read}")));
        }
        Ok(series)
    }
}

/// `integral_a^b exp(i w x) dx`.
fn exp_integral(w: i64, (a, b): (f64, f64)) -> Complex64 {
    if w == 0 {
        return Complex64::new(b - a, 0.0);
    }
    let w = w as f64;
    (Complex64::from_polar(1.0, w * b) - Complex64::from_polar(1.0, w * a)) / Complex64::new(0.0, w)
}

/// One folded sinusoid `amplitude * cos(omega . x + phase)`, with
/// `omega1 > 0`, or `omega1 == 0` and `omega2 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealTerm {
    pub amplitude: f64,
    pub omega: (i64, i64),
    pub phase: f64,
}

impl RealTerm {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.amplitude * (self.omega.0 as f64 * x[0] + self.omega.1 as f64 * x[1] + self.phase).cos()
    }

    pub fn integral(&self, bounds: [(f64, f64); 2]) -> f64 {
        let z = Complex64::from_polar(self.amplitude, self.phase)
            * exp_integral(self.omega.0, bounds[0])
            * exp_integral(self.omega.1, bounds[1]);
        z.re
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermList {
    pub constant: f64,
    pub terms: Vec<RealTerm>,
}

impl TermList {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.constant + self.terms.iter().map(|t| t.value(x)).sum::<f64>()
    }

    pub fn integral(&self, bounds: [(f64, f64); 2]) -> f64 {
        let area = (bounds[0].1 - bounds[0].0) * (bounds[1].1 - bounds[1].0);
        self.constant * area + self.terms.iter().map(|t| t.integral(bounds)).sum::<f64>()
    }
}

/// Sample points of the extraction grid, row-major in `x1`.
pub fn grid_points(n_max: usize) -> Vec<[f64; 2]> {
    let side = 2 * n_max + 1;
    let step = 2.0 * std::f64::consts::PI / side as f64;
    (0..side * side).map(|i| [(i / side) as f64 * step, (i % side) as f64 * step]).collect()
}

/// Coefficients from samples taken at [`grid_points`]`(n_max)`.
pub fn extract_from_samples(samples: &[f64], n_max: usize) -> Result<FourierSeries2D, FourierError> {
    let mut series = FourierSeries2D::zeros(n_max)?;
    let side = 2 * n_max + 1;
    assert_eq!(samples.len(), side * side, "sample count must match the extraction grid");
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(FourierError::NonFinite);
    }
    let mut data: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    let fft = FftPlanner::new().plan_fft_forward(side);
    fft.process(&mut data);
    let mut column = vec![Complex64::new(0.0, 0.0); side];
    for k in 0..side {
        for (j, c) in column.iter_mut().enumerate() {
            *c = data[j * side + k];
        }
        fft.process(&mut column);
        for (j, c) in column.iter().enumerate() {
            data[j * side + k] = *c;
        }
    }
    let norm = (side * side) as f64;
    let freq = |m: usize| if m <= n_max { m as i64 } else { m as i64 - side as i64 };
    for (i, c) in data.iter().enumerate() {
        series.set((freq(i / side), freq(i % side)), c / norm)?;
    }
    Ok(series)
}

/// DFT coefficients of `f` on the `(2 n_max + 1)^2` grid over `[0, 2pi)^2`.
pub fn extract(mut f: impl FnMut(f64, f64) -> f64, n_max: usize) -> Result<FourierSeries2D, FourierError> {
    if n_max > MAX_N_MAX {
        return Err(FourierError::TooLarge(n_max));
    }
    let samples: Vec<f64> = grid_points(n_max).iter().map(|p| f(p[0], p[1])).collect();
    extract_from_samples(&samples, n_max)
}
