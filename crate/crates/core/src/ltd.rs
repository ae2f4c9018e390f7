//! Loop-tree duality integrand for the NLO decay rate of a scalar at rest.
//!
//! Propagators are numbered 1..=6 with three-momenta `q1 = l1 + l2`,
//! `q2 = q3 = l1`, `q4 = q5 = l2` and `q6 = 0` once `l3 = 0`. Energies are
//! `q_i = sqrt(|q_i|^2 + m_i^2)`; `m6` is the decaying mass `sqrt(s)`.
//!
//! The integrand lives on the unit box: `u1` maps to `l1 = sqrt(s) u1 / (1 - u1)`
//! and `u2` is the angle variable `v` with `cos(theta) = 1 - 2v`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtdError {
    #[error("invalid process spec: {0}")]
    Spec(String),
    #[error("invalid kinematics: {0}")]
    Kinematics(String),
    #[error("invalid index sets: {0}")]
    IndexSet(String),
    #[error("vanishing causal denominator lambda_{0} (unregulated threshold)")]
    Threshold(String),
    #[error("two-body channel closed: m4 + m5 >= sqrt(s)")]
    ChannelClosed,
    #[error("unknown process `{0}`")]
    UnknownProcess(String),
    #[error("process `{0}` is already registered")]
    DuplicateProcess(String),
    #[error("point ({0}, {1}) outside the open unit box")]
    OutsideBox(f64, f64),
}

pub const PHI_SCALAR: &str = "phi";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    /// Registry name of the residue pair.
    pub process: String,
    pub sqrt_s: f64,
    /// `2 m / sqrt(s)`.
    pub mass_ratio: f64,
    /// Overall factor `g m^2` multiplying both residues.
    pub coupling: f64,
    /// `m1..m6`.
    pub masses: [f64; 6],
}

impl ProcessSpec {
    /// `m1 = 0`, `m2..m5 = mass_ratio sqrt(s) / 2`, `m6 = sqrt(s)`.
    pub fn new(process: &str, sqrt_s: f64, mass_ratio: f64) -> Result<Self, LtdError> {
        let m = mass_ratio * sqrt_s / 2.0;
        let spec = Self {
            process: process.to_string(),
            sqrt_s,
            mass_ratio,
            coupling: 1.0,
            masses: [0.0, m, m, m, m, sqrt_s],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn phi(mass_ratio: f64) -> Result<Self, LtdError> {
        Self::new(PHI_SCALAR, 1.0, mass_ratio)
    }

    pub fn validate(&self) -> Result<(), LtdError> {
        if !(self.sqrt_s > 0.0 && self.sqrt_s.is_finite()) {
            return Err(LtdError::Spec(format!("sqrt_s = {}", self.sqrt_s)));
        }
        if !(0.0..1.0).contains(&self.mass_ratio) {
            return Err(LtdError::Spec(format!("mass_ratio = {} not in [0, 1)", self.mass_ratio)));
        }
        if self.masses.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(LtdError::Spec("masses must be finite and non-negative".into()));
        }
        if self.masses[5] != self.sqrt_s {
            return Err(LtdError::Spec("m6 must equal sqrt_s".into()));
        }
        if !self.coupling.is_finite() {
            return Err(LtdError::Spec("coupling must be finite".into()));
        }
        Ok(())
    }

    /// Same process with `m2 <-> m5` and `m3 <-> m4`.
    pub fn partner(&self) -> Self {
        let mut out = self.clone();
        out.masses = swap_masses(&self.masses);
        out
    }
}

fn swap_masses(m: &[f64; 6]) -> [f64; 6] {
    [m[0], m[4], m[3], m[2], m[1], m[5]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub l1: f64,
    pub l2: f64,
    pub v: f64,
}

/// `q_plus[i - 1]` holds the energy of propagator `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnShellEnergies {
    pub q_plus: [f64; 6],
}

impl OnShellEnergies {
    pub fn get(&self, i: usize) -> f64 {
        self.q_plus[i - 1]
    }

    /// `x = prod 2 q_i` over the given propagators.
    pub fn x(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| 2.0 * self.get(i)).product()
    }
}

pub fn on_shell_energies(kin: &Kinematics, masses: &[f64; 6]) -> Result<OnShellEnergies, LtdError> {
    let Kinematics { l1, l2, v } = *kin;
    if !(l1 >= 0.0 && l2 >= 0.0 && l1.is_finite() && l2.is_finite()) {
        return Err(LtdError::Kinematics(format!("moduli ({l1}, {l2})")));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(LtdError::Kinematics(format!("v = {v}")));
    }
    Ok(energies(l1, l2, v, masses))
}

fn energies(l1: f64, l2: f64, v: f64, m: &[f64; 6]) -> OnShellEnergies {
    let c = 1.0 - 2.0 * v;
    let q1_sq = (l1 * l1 + l2 * l2 + 2.0 * c * l1 * l2).max(0.0);
    let e = |p2: f64, mass: f64| (p2 + mass * mass).sqrt();
    OnShellEnergies {
        q_plus: [
            e(q1_sq, m[0]),
            e(l1 * l1, m[1]),
            e(l1 * l1, m[2]),
            e(l2 * l2, m[3]),
            e(l2 * l2, m[4]),
            m[5],
        ],
    }
}

/// `lambda = sum over unbarred q - sum over barred q`, indices 1..=6.
pub fn lambda(e: &OnShellEnergies, unbarred: &[usize], barred: &[usize]) -> Result<f64, LtdError> {
    let mut seen = [false; 6];
    for &i in unbarred.iter().chain(barred) {
        if !(1..=6).contains(&i) {
            return Err(LtdError::IndexSet(format!("index {i} out of 1..=6")));
        }
        if std::mem::replace(&mut seen[i - 1], true) {
            return Err(LtdError::IndexSet(format!("index {i} repeated")));
        }
    }
    Ok(unbarred.iter().map(|&i| e.get(i)).sum::<f64>() - barred.iter().map(|&i| e.get(i)).sum::<f64>())
}

struct Lam<'a> {
    e: &'a OnShellEnergies,
    guard: f64,
}

impl Lam<'_> {
    fn get(&self, unbarred: &[usize], barred: &[usize]) -> Result<f64, LtdError> {
        let value = lambda(self.e, unbarred, barred)?;
        if value.abs() > self.guard {
            Ok(value)
        } else {
            let label = |s: &[usize]| s.iter().map(|i| i.to_string()).collect::<String>();
            let name = if barred.is_empty() {
                label(unbarred)
            } else {
                format!("{{{} bar {}}}", label(unbarred), label(barred))
            };
            Err(LtdError::Threshold(name))
        }
    }
}

fn guard(e: &OnShellEnergies, sqrt_s: f64) -> Lam<'_> {
    Lam { e, guard: 1e-12 * sqrt_s }
}

/// One-loop two-body residue at the `lambda_456` cut.
pub fn residue_456(e: &OnShellEnergies, spec: &ProcessSpec) -> Result<f64, LtdError> {
    let l = guard(e, spec.sqrt_s);
    let big_l = |i: f64, j: f64, k: f64| (1.0 / i) * (1.0 / j + 1.0 / k);
    let l_23_45 = l.get(&[2, 3], &[4, 5])?;
    let l_125 = l.get(&[1, 2, 5], &[])?;
    let l_134 = l.get(&[1, 3, 4], &[])?;
    let sum = big_l(l.get(&[1, 3], &[4])?, l_23_45, l_125)
        + big_l(l.get(&[1, 2], &[5])?, l_23_45, l_134)
        + big_l(l.get(&[2, 3, 4, 5], &[])?, l_134, l_125);
    Ok(spec.coupling * sum / e.x(&[1, 2, 3, 4, 5]))
}

/// Tree-level three-body residue at the `lambda_1356` cut.
pub fn residue_1356(e: &OnShellEnergies, spec: &ProcessSpec) -> Result<f64, LtdError> {
    let l = guard(e, spec.sqrt_s);
    let denom = l.get(&[1, 3], &[4])? * l.get(&[1, 3, 4], &[])? * l.get(&[1, 5], &[2])? * l.get(&[1, 2, 5], &[])?;
    Ok(spec.coupling / (e.x(&[1, 3, 5]) * denom))
}

/// `l` with `sqrt(l^2 + ma^2) + sqrt(l^2 + mb^2) = energy`, if any.
fn two_particle_momentum(energy: f64, ma: f64, mb: f64) -> Option<f64> {
    if ma + mb >= energy {
        return None;
    }
    let ea = (energy * energy + ma * ma - mb * mb) / (2.0 * energy);
    Some((ea * ea - ma * ma).max(0.0).sqrt())
}

/// `(l2*, 1 / |d lambda_{45 bar 6} / d l2|)` for the two-body cut.
pub fn resolve_two_body(spec: &ProcessSpec) -> Result<(f64, f64), LtdError> {
    two_body_for(&spec.masses, spec.sqrt_s).ok_or(LtdError::ChannelClosed)
}

fn two_body_for(m: &[f64; 6], sqrt_s: f64) -> Option<(f64, f64)> {
    let l2 = two_particle_momentum(sqrt_s, m[3], m[4])?;
    let (q4, q5) = ((l2 * l2 + m[3] * m[3]).sqrt(), (l2 * l2 + m[4] * m[4]).sqrt());
    let jac = 1.0 / (l2 / q4 + l2 / q5);
    jac.is_finite().then_some((l2, jac))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeBodyRoot {
    pub l2: f64,
    pub jacobian: f64,
    /// `lambda_{135 bar 6}` at the root.
    pub residual: f64,
}

/// All `l2 >= 0` solving `|l1 + l2| + q3 + q5 = sqrt(s)` at fixed `(l1, v)`.
/// Empty when the three-body phase space is closed there.
pub fn resolve_three_body(l1: f64, v: f64, spec: &ProcessSpec) -> Vec<ThreeBodyRoot> {
    three_body_for(l1, v, &spec.masses, spec.sqrt_s)
}

fn three_body_for(l1: f64, v: f64, m: &[f64; 6], sqrt_s: f64) -> Vec<ThreeBodyRoot> {
    let c = 1.0 - 2.0 * v;
    let t = sqrt_s - (l1 * l1 + m[2] * m[2]).sqrt();
    if t <= m[0] + m[4] {
        return Vec::new();
    }
    // q1 = t - q5; squaring twice leaves a quadratic in l2.
    let k = t * t + m[4] * m[4] - m[0] * m[0] - l1 * l1;
    let a = 4.0 * (t * t - c * c * l1 * l1);
    let b = 4.0 * k * c * l1;
    let c0 = 4.0 * t * t * m[4] * m[4] - k * k;
    let mut candidates = Vec::with_capacity(2);
    if a.abs() <= 1e-14 * t * t {
        if b != 0.0 {
            candidates.push(-c0 / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c0;
        if disc < 0.0 {
            return Vec::new();
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q != 0.0 {
            candidates.push(q / a);
            candidates.push(c0 / q);
        } else {
            candidates.push(0.0);
        }
    }
    let f = |l2: f64| {
        let q1 = (l1 * l1 + l2 * l2 + 2.0 * c * l1 * l2 + m[0] * m[0]).max(0.0).sqrt();
        let q5 = (l2 * l2 + m[4] * m[4]).sqrt();
        (q1 + q5 - t, (l2 + c * l1) / q1 + l2 / q5)
    };
    let mut roots: Vec<ThreeBodyRoot> = Vec::new();
    for mut l2 in candidates {
        if !(l2 >= 0.0 && l2.is_finite()) {
            continue;
        }
        // Squaring admits spurious roots; keep those that satisfy the cut.
        if f(l2).0.abs() > 1e-6 * sqrt_s {
            continue;
        }
        for _ in 0..2 {
            let (r, d) = f(l2);
            if d != 0.0 && d.is_finite() && r != 0.0 {
                let next = l2 - r / d;
                if next >= 0.0 {
                    l2 = next;
                }
            }
        }
        let (residual, deriv) = f(l2);
        let jacobian = 1.0 / deriv.abs();
        if !jacobian.is_finite() || roots.iter().any(|r| (r.l2 - l2).abs() <= 1e-12 * sqrt_s) {
            continue;
        }
        roots.push(ThreeBodyRoot { l2, jacobian, residual });
    }
    roots
}

pub type ResidueFn = Arc<dyn Fn(&OnShellEnergies, &ProcessSpec) -> Result<f64, LtdError> + Send + Sync>;

#[derive(Clone)]
pub struct Process {
    pub residue_456: ResidueFn,
    pub residue_1356: ResidueFn,
}

impl fmt::Debug for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Process { .. }")
    }
}

#[derive(Debug, Clone)]
pub struct ProcessRegistry {
    processes: BTreeMap<String, Process>,
}

impl Default for ProcessRegistry {
    /// Registry holding the built-in scalar process under [`PHI_SCALAR`].
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(PHI_SCALAR, Arc::new(residue_456), Arc::new(residue_1356)).expect("fresh registry");
        r
    }
}

impl ProcessRegistry {
    pub fn empty() -> Self {
        Self { processes: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, residue_456: ResidueFn, residue_1356: ResidueFn) -> Result<(), LtdError> {
        if self.processes.contains_key(name) {
            return Err(LtdError::DuplicateProcess(name.to_string()));
        }
        self.processes.insert(name.to_string(), Process { residue_456, residue_1356 });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Process, LtdError> {
        self.processes.get(name).ok_or_else(|| LtdError::UnknownProcess(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.processes.keys().map(String::as_str)
    }
}

/// One labeling of the diagram: the direct terms use `ProcessSpec::masses`, the
/// partner terms the swapped masses.
#[derive(Debug, Clone)]
struct Orientation {
    spec: ProcessSpec,
    two_body: Option<(f64, f64)>,
    /// `(u_t, half-width)` of the threshold where `q2 + q3 = sqrt(s)`.
    pole: Option<(f64, f64)>,
}

impl Orientation {
    fn new(spec: ProcessSpec) -> Self {
        let two_body = two_body_for(&spec.masses, spec.sqrt_s);
        let pole = two_body.and(two_particle_momentum(spec.sqrt_s, spec.masses[1], spec.masses[2])).map(|lt| {
            let ut = lt / (spec.sqrt_s + lt);
            (ut, ut.min(1.0 - ut))
        });
        Self { spec, two_body, pole }
    }
}

/// Contributions to the integrand at one point, prefactors included.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegrandParts {
    pub two_body: f64,
    pub three_body: f64,
    /// Principal-value counterterm already removed from `two_body`.
    pub counterterm: f64,
}

impl IntegrandParts {
    pub fn total(&self) -> f64 {
        self.two_body + self.three_body
    }
}

/// The bounded two-dimensional decay-rate integrand for one process.
///
/// The one-loop term has a simple pole in `l1` where `q2 + q3 = sqrt(s)`.
/// Its principal value is taken by subtracting `R(v) chi(u1) / (u1 - u_t)`,
/// where `R` is the residue of the pole in `u1` and `chi` a smooth even bump
/// on `|u1 - u_t| < w`. The counterterm integrates to zero over `u1`.
#[derive(Clone)]
pub struct Integrand {
    spec: ProcessSpec,
    process: Process,
    orientations: [Orientation; 2],
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand").field("spec", &self.spec).finish_non_exhaustive()
    }
}

/// Relative step used to read off the pole residue.
const RESIDUE_STEP: f64 = 1e-4;
/// Relative distance from `u_t` inside which the subtracted value is
/// replaced by the mean of its neighbours.
const POLE_GAP: f64 = 1e-6;

impl Integrand {
    pub fn new(spec: &ProcessSpec, registry: &ProcessRegistry) -> Result<Self, LtdError> {
        spec.validate()?;
        let process = registry.get(&spec.process)?.clone();
        Ok(Self {
            orientations: [Orientation::new(spec.clone()), Orientation::new(spec.partner())],
            spec: spec.clone(),
            process,
        })
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    fn map(&self, u1: f64) -> (f64, f64) {
        let s = self.spec.sqrt_s;
        (s * u1 / (1.0 - u1), s / ((1.0 - u1) * (1.0 - u1)))
    }

    fn two_body_mapped(&self, o: &Orientation, u1: f64, v: f64) -> Result<f64, LtdError> {
        let Some((l2, jac)) = o.two_body else { return Ok(0.0) };
        let (l1, map_jac) = self.map(u1);
        let e = energies(l1, l2, v, &o.spec.masses);
        let r = (self.process.residue_456)(&e, &o.spec)?;
        Ok(l1 * l1 * l2 * l2 * 2.0 * PI * jac * r * map_jac)
    }

    fn three_body_mapped(&self, o: &Orientation, u1: f64, v: f64) -> Result<f64, LtdError> {
        let (l1, map_jac) = self.map(u1);
        let mut acc = 0.0;
        for root in three_body_for(l1, v, &o.spec.masses, o.spec.sqrt_s) {
            let e = energies(l1, root.l2, v, &o.spec.masses);
            let r = (self.process.residue_1356)(&e, &o.spec)?;
            acc += l1 * l1 * root.l2 * root.l2 * 2.0 * PI * root.jacobian * r;
        }
        Ok(acc * map_jac)
    }

    /// Residue of the two-body term's pole in `u1`, from symmetric
    /// differences with one Richardson step.
    fn pole_residue(&self, o: &Orientation, ut: f64, w: f64, v: f64) -> Result<f64, LtdError> {
        let estimate = |d: f64| -> Result<f64, LtdError> {
            Ok(0.5 * d * (self.two_body_mapped(o, ut + d, v)? - self.two_body_mapped(o, ut - d, v)?))
        };
        let h = RESIDUE_STEP * w;
        Ok((4.0 * estimate(0.5 * h)? - estimate(h)?) / 3.0)
    }

    fn subtracted_two_body(&self, o: &Orientation, u1: f64, v: f64) -> Result<(f64, f64), LtdError> {
        let raw = |u: f64| self.two_body_mapped(o, u, v);
        let Some((ut, w)) = o.pole else { return Ok((raw(u1)?, 0.0)) };
        let z = (u1 - ut) / w;
        if z.abs() >= 1.0 {
            return Ok((raw(u1)?, 0.0));
        }
        let residue = self.pole_residue(o, ut, w, v)?;
        let counter = |u: f64| {
            let z = (u - ut) / w;
            residue * (1.0 - z * z).powi(2) / (u - ut)
        };
        let gap = POLE_GAP * w;
        if (u1 - ut).abs() < gap {
            let above = raw(ut + gap)? - counter(ut + gap);
            let below = raw(ut - gap)? - counter(ut - gap);
            return Ok((0.5 * (above + below), 0.0));
        }
        let c = counter(u1);
        Ok((raw(u1)? - c, c))
    }

    pub fn parts(&self, u: [f64; 2]) -> Result<IntegrandParts, LtdError> {
        let [u1, v] = u;
        if !(u1 >= 0.0 && u1 < 1.0 && (0.0..=1.0).contains(&v)) {
            return Err(LtdError::OutsideBox(u1, v));
        }
        let norm = 1.0 / (2.0 * self.spec.sqrt_s) / (4.0 * PI.powi(4));
        let mut parts = IntegrandParts::default();
        for o in &self.orientations {
            let (two, counter) = self.subtracted_two_body(o, u1, v)?;
            parts.two_body += norm * two;
            parts.counterterm += norm * counter;
            parts.three_body += norm * self.three_body_mapped(o, u1, v)?;
        }
        Ok(parts)
    }

    pub fn eval(&self, u: [f64; 2]) -> Result<f64, LtdError> {
        Ok(self.parts(u)?.total())
    }

    /// Points in `u1` at fixed `v` where the integrand or one of its low
    /// derivatives is not smooth: thresholds, edges of the counterterm
    /// window, and edges of the three-body phase space.
    pub fn u1_breakpoints(&self, v: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for o in &self.orientations {
            if let Some((ut, w)) = o.pole {
                out.extend([ut - w, ut, ut + w]);
            }
            out.extend(self.three_body_edges(o, v));
        }
        out.retain(|u| *u > 0.0 && *u < 1.0);
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        out
    }

    fn three_body_edges(&self, o: &Orientation, v: f64) -> Vec<f64> {
        let s = o.spec.sqrt_s;
        let m = &o.spec.masses;
        // Beyond this l1 the remaining energy cannot produce particles 1 and 5.
        let Some(l_max) = two_particle_momentum(s, m[2], m[0] + m[4]) else { return Vec::new() };
        let open = |l1: f64| !three_body_for(l1, v, m, s).is_empty();
        const SCAN: usize = 64;
        let grid: Vec<f64> = (0..=SCAN).map(|i| l_max * i as f64 / SCAN as f64).collect();
        let mut edges = Vec::new();
        for pair in grid.windows(2) {
            let (mut a, mut b) = (pair[0], pair[1]);
            let (oa, ob) = (open(a), open(b));
            if oa == ob {
                continue;
            }
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if open(mid) == oa {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let l = 0.5 * (a + b);
            edges.push(l / (s + l));
        }
        edges
    }
}

/// Convenience wrapper building the integrand for one evaluation.
pub fn integrand_2d(u: [f64; 2], spec: &ProcessSpec, registry: &ProcessRegistry) -> Result<f64, LtdError> {
    Integrand::new(spec, registry)?.eval(u)
}
