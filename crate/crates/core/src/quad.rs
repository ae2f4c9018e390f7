//! Classical integration over the unit square: tensor Gauss-Legendre on
//! panels, a nested variant with per-row breakpoints, and seeded Monte Carlo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("order must be at least 2, got {0}")]
    Order(usize),
    #[error("at least one panel is required")]
    Panels,
    #[error("at least two samples are required")]
    Samples,
    #[error("non-finite integrand value at ({0}, {1})")]
    NonFinite(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
}

/// Nodes and weights of the `order`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(x) and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Sum with pairwise splitting, so results do not depend on how terms are
/// grouped by the caller.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Panel rule on `[a, b]`: `panels` equal panels of `order` points each.
fn panel_rule(a: f64, b: f64, panels: usize, nodes: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * nodes.len());
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in nodes.iter().zip(weights) {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

/// Rule on `[a, b]` after the substitution `t -> 3t^2 - 2t^3`, which
/// clusters nodes at both ends and absorbs inverse-square-root endpoint
/// behaviour.
fn graded_rule(a: f64, b: f64, panels: usize, nodes: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    panel_rule(0.0, 1.0, panels, nodes, weights)
        .into_iter()
        .map(|(t, w)| (a + (b - a) * t * t * (3.0 - 2.0 * t), w * (b - a) * 6.0 * t * (1.0 - t)))
        .collect()
}

fn check(order: usize, panels: usize) -> Result<(), QuadError> {
    if order < 2 {
        return Err(QuadError::Order(order));
    }
    if panels == 0 {
        return Err(QuadError::Panels);
    }
    Ok(())
}

fn tensor_sum(f: &mut impl FnMut(f64, f64) -> f64, rule: &[(f64, f64)]) -> Result<f64, QuadError> {
    let mut terms = Vec::with_capacity(rule.len() * rule.len());
    for &(x, wx) in rule {
        for &(y, wy) in rule {
            let v = f(x, y);
            if !v.is_finite() {
                return Err(QuadError::NonFinite(x, y));
            }
            terms.push(wx * wy * v);
        }
    }
    Ok(pairwise_sum(&terms))
}

/// Tensor Gauss-Legendre over `panels x panels` sub-squares. The error
/// estimate compares against half as many panels (or half the order when
/// there is a single panel).
pub fn gauss_2d(mut f: impl FnMut(f64, f64) -> f64, order: usize, panels: usize) -> Result<QuadResult, QuadError> {
    check(order, panels)?;
    let (x, w) = gauss_legendre(order);
    let fine = panel_rule(0.0, 1.0, panels, &x, &w);
    let coarse = if panels > 1 {
        panel_rule(0.0, 1.0, panels / 2, &x, &w)
    } else {
        let (xc, wc) = gauss_legendre(order / 2);
        panel_rule(0.0, 1.0, 1, &xc, &wc)
    };
    let value = tensor_sum(&mut f, &fine)?;
    let reference = tensor_sum(&mut f, &coarse)?;
    Ok(QuadResult {
        value,
        error_estimate: (value - reference).abs(),
        evaluations: (fine.len() * fine.len() + coarse.len() * coarse.len()) as u64,
    })
}

/// Iterated integral `int_0^1 dv int_0^1 du1 f(u1, v)`. The outer variable
/// uses uniform panels, which keep nodes away from the ends of `[0, 1]`;
/// for each outer node the inner range is split at `breakpoints(v)` and
/// each piece gets graded panels, clustering nodes at the breakpoints.
/// The error estimate compares against half as many panels.
pub fn nested_gauss(
    mut f: impl FnMut(f64, f64) -> f64,
    breakpoints: impl Fn(f64) -> Vec<f64>,
    order: usize,
    panels: usize,
) -> Result<QuadResult, QuadError> {
    let (value, e1) = nested_gauss_fixed(&mut f, &breakpoints, order, panels)?;
    let (reference, e2) = nested_gauss_fixed(&mut f, &breakpoints, order, if panels > 1 { panels / 2 } else { 2 })?;
    Ok(QuadResult { value, error_estimate: (value - reference).abs(), evaluations: e1 + e2 })
}

/// One resolution of [`nested_gauss`]: the value and the number of
/// evaluations.
pub fn nested_gauss_fixed(
    f: &mut impl FnMut(f64, f64) -> f64,
    breakpoints: &impl Fn(f64) -> Vec<f64>,
    order: usize,
    panels: usize,
) -> Result<(f64, u64), QuadError> {
    check(order, panels)?;
    let (x, w) = gauss_legendre(order);
    let outer = panel_rule(0.0, 1.0, panels, &x, &w);
    let mut rows = Vec::with_capacity(outer.len());
    let mut evals = 0u64;
    for &(v, wv) in &outer {
        let mut edges = vec![0.0];
        edges.extend(breakpoints(v).into_iter().filter(|b| *b > 0.0 && *b < 1.0));
        edges.push(1.0);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut terms = Vec::new();
        for seg in edges.windows(2) {
            for (u, wu) in graded_rule(seg[0], seg[1], panels, &x, &w) {
                let val = f(u, v);
                if !val.is_finite() {
                    return Err(QuadError::NonFinite(u, v));
                }
                terms.push(wu * val);
            }
        }
        evals += terms.len() as u64;
        rows.push(wv * pairwise_sum(&terms));
    }
    Ok((pairwise_sum(&rows), evals))
}

/// Plain Monte Carlo with uniform points; the error estimate is the
/// standard error of the mean.
pub fn monte_carlo_2d(mut f: impl FnMut(f64, f64) -> f64, samples: usize, seed: u64) -> Result<QuadResult, QuadError> {
    if samples < 2 {
        return Err(QuadError::Samples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
        let v = f(x, y);
        if !v.is_finite() {
            return Err(QuadError::NonFinite(x, y));
        }
        values.push(v);
    }
    let n = samples as f64;
    let mean = pairwise_sum(&values) / n;
    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = pairwise_sum(&squares) / (n - 1.0);
    Ok(QuadResult { value: mean, error_estimate: (variance / n).sqrt(), evaluations: samples as u64 })
}
