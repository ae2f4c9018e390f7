//! Dense statevector simulator.
//!
//! Qubit 0 is the least-significant bit of the basis index. Rotations follow
//! `R_P(theta) = exp(-i theta P / 2)`, so `RY(theta)|0>` measures one with
//! probability `sin^2(theta / 2)`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("qubit count {0} outside 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    IndexOutOfRange { index: usize, n_qubits: usize },
    #[error("gate acts twice on qubit {0}")]
    DuplicateQubit(usize),
    #[error("rotation angle is not finite: {0}")]
    NonFiniteAngle(f64),
    #[error("expected {expected} amplitudes, got {got}")]
    AmplitudeLength { expected: usize, got: usize },
    #[error("circuit has {circuit} qubits but state has {state}")]
    QubitMismatch { circuit: usize, state: usize },
    #[error("shot count must be at least 1")]
    ZeroShots,
}

/// A single gate. Controlled kinds carry their control explicitly, rotations
/// carry their angle, so an angle-less rotation cannot be constructed.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Z(usize),
    Rx(usize, f64),
    Ry(usize, f64),
    Rz(usize, f64),
    Cnot { control: usize, target: usize },
    Cz { control: usize, target: usize },
    Cry { control: usize, target: usize, angle: f64 },
    /// Phase flip on every basis state whose bits in `mask` are all one.
    /// With `X` conjugation this gives the reflection about `|0...0>`.
    McZ { mask: u32 },
}

impl Gate {
    /// The adjoint gate.
    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::Rx(q, a) => Gate::Rx(q, -a),
            Gate::Ry(q, a) => Gate::Ry(q, -a),
            Gate::Rz(q, a) => Gate::Rz(q, -a),
            Gate::Cry { control, target, angle } => Gate::Cry { control, target, angle: -angle },
            ref g => g.clone(),
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<(), SimError> {
        let check = |q: usize| {
            if q < n_qubits {
                Ok(())
            } else {
                Err(SimError::IndexOutOfRange { index: q, n_qubits })
            }
        };
        let check_angle = |a: f64| {
            if a.is_finite() {
                Ok(())
            } else {
                Err(SimError::NonFiniteAngle(a))
            }
        };
        match *self {
            Gate::H(q) | Gate::X(q) | Gate::Z(q) => check(q),
            Gate::Rx(q, a) | Gate::Ry(q, a) | Gate::Rz(q, a) => {
                check(q)?;
                check_angle(a)
            }
            Gate::Cnot { control, target } | Gate::Cz { control, target } => {
                check(control)?;
                check(target)?;
                if control == target {
                    return Err(SimError::DuplicateQubit(control));
                }
                Ok(())
            }
            Gate::Cry { control, target, angle } => {
                check(control)?;
                check(target)?;
                if control == target {
                    return Err(SimError::DuplicateQubit(control));
                }
                check_angle(angle)
            }
            Gate::McZ { mask } => {
                if mask == 0 {
                    return Err(SimError::IndexOutOfRange { index: 0, n_qubits: 0 });
                }
                let top = 31 - mask.leading_zeros() as usize;
                check(top)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self, SimError> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self, SimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(SimError::QubitCount(n_qubits));
        }
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(SimError::IndexOutOfRange { index, n_qubits });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps raw amplitudes. No normalization is imposed, which lets linearity
    /// be checked on arbitrary superpositions.
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self, SimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(SimError::QubitCount(n_qubits));
        }
        let expected = 1usize << n_qubits;
        if amps.len() != expected {
            return Err(SimError::AmplitudeLength { expected, got: amps.len() });
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_qubit(&self, q: usize) -> Result<(), SimError> {
        if q < self.n_qubits {
            Ok(())
        } else {
            Err(SimError::IndexOutOfRange { index: q, n_qubits: self.n_qubits })
        }
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<(), SimError> {
        gate.validate(self.n_qubits)?;
        self.apply_unchecked(gate);
        Ok(())
    }

    /// Applies a gate that has already been validated for this register size.
    pub(crate) fn apply_unchecked(&mut self, gate: &Gate) {
        let amps = &mut self.amps;
        match *gate {
            Gate::H(q) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for_pairs(amps, q, |a, b| {
                    let (x, y) = (*a, *b);
                    *a = (x + y) * s;
                    *b = (x - y) * s;
                });
            }
            Gate::X(q) => for_pairs(amps, q, std::mem::swap),
            Gate::Z(q) => {
                let bit = 1 << q;
                for (i, a) in amps.iter_mut().enumerate() {
                    if i & bit != 0 {
                        *a = -*a;
                    }
                }
            }
            Gate::Rx(q, theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                for_pairs(amps, q, |a, b| {
                    let (x, y) = (*a, *b);
                    // [[c, -is], [-is, c]]
                    *a = Complex64::new(c * x.re + s * y.im, c * x.im - s * y.re);
                    *b = Complex64::new(c * y.re + s * x.im, c * y.im - s * x.re);
                });
            }
            Gate::Ry(q, theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                for_pairs(amps, q, |a, b| {
                    let (x, y) = (*a, *b);
                    *a = x * c - y * s;
                    *b = x * s + y * c;
                });
            }
            Gate::Rz(q, theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                for_pairs(amps, q, |a, b| {
                    *a *= lo;
                    *b *= hi;
                });
            }
            Gate::Cnot { control, target } => {
                let cbit = 1 << control;
                let tbit = 1 << target;
                for i in 0..amps.len() {
                    if i & cbit != 0 && i & tbit == 0 {
                        amps.swap(i, i | tbit);
                    }
                }
            }
            Gate::Cz { control, target } => {
                let mask = (1 << control) | (1 << target);
                for (i, a) in amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *a = -*a;
                    }
                }
            }
            Gate::Cry { control, target, angle } => {
                let (s, c) = (angle / 2.0).sin_cos();
                let cbit = 1 << control;
                let tbit = 1 << target;
                for i in 0..amps.len() {
                    if i & cbit != 0 && i & tbit == 0 {
                        let (x, y) = (amps[i], amps[i | tbit]);
                        amps[i] = x * c - y * s;
                        amps[i | tbit] = x * s + y * c;
                    }
                }
            }
            Gate::McZ { mask } => {
                let mask = mask as usize;
                for (i, a) in amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *a = -*a;
                    }
                }
            }
        }
    }

    /// `<Z_qubit>`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64, SimError> {
        self.check_qubit(qubit)?;
        let bit = 1 << qubit;
        let mut acc = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            if i & bit == 0 {
                acc += a.norm_sqr();
            } else {
                acc -= a.norm_sqr();
            }
        }
        Ok(acc)
    }

    /// Probability that measuring `qubit` yields one.
    pub fn probability_one(&self, qubit: usize) -> Result<f64, SimError> {
        self.check_qubit(qubit)?;
        let bit = 1 << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    pub fn probability_zero(&self, qubit: usize) -> Result<f64, SimError> {
        self.check_qubit(qubit)?;
        let bit = 1 << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Number of ones in `shots` measurements of `qubit`, drawn as a single
    /// binomial variate from a generator seeded with `seed`.
    pub fn sample(&self, qubit: usize, shots: u64, seed: u64) -> Result<u64, SimError> {
        if shots == 0 {
            return Err(SimError::ZeroShots);
        }
        let p = self.probability_one(qubit)? / self.norm_sqr();
        Ok(sample_binomial(p, shots, seed))
    }
}

pub(crate) fn sample_binomial(p: f64, shots: u64, seed: u64) -> u64 {
    let p = p.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // p is clamped to [0, 1], which is all Binomial::new rejects.
    Binomial::new(shots, p).expect("probability in range").sample(&mut rng)
}

/// Visits every amplitude pair `(i, i | 1<<q)` with bit `q` clear in `i`.
#[inline]
fn for_pairs(amps: &mut [Complex64], q: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
    let stride = 1usize << q;
    for block in amps.chunks_exact_mut(stride << 1) {
        let (lo, hi) = block.split_at_mut(stride);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            f(a, b);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, ops: Vec::new() }
    }

    pub fn with_ops(n_qubits: usize, ops: Vec<Gate>) -> Self {
        Self { n_qubits, ops }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[Gate] {
        &self.ops
    }

    pub fn push(&mut self, gate: Gate) -> &mut Self {
        self.ops.push(gate);
        self
    }

    /// Appends `other` so that it runs after `self`.
    pub fn append(&mut self, other: &Circuit) -> Result<(), SimError> {
        if other.n_qubits != self.n_qubits {
            return Err(SimError::QubitMismatch { circuit: other.n_qubits, state: self.n_qubits });
        }
        self.ops.extend(other.ops.iter().cloned());
        Ok(())
    }

    /// The adjoint circuit.
    pub fn inverse(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            ops: self.ops.iter().rev().map(Gate::inverse).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(SimError::QubitCount(self.n_qubits));
        }
        self.ops.iter().try_for_each(|g| g.validate(self.n_qubits))
    }

    pub fn run(&self, initial: &StateVector) -> Result<StateVector, SimError> {
        let mut state = initial.clone();
        self.run_in_place(&mut state)?;
        Ok(state)
    }

    pub fn run_in_place(&self, state: &mut StateVector) -> Result<(), SimError> {
        if state.n_qubits != self.n_qubits {
            return Err(SimError::QubitMismatch { circuit: self.n_qubits, state: state.n_qubits });
        }
        self.validate()?;
        for g in &self.ops {
            state.apply_unchecked(g);
        }
        Ok(())
    }

    /// Runs from `|0...0>`.
    pub fn run_from_zero(&self) -> Result<StateVector, SimError> {
        let mut state = StateVector::zero(self.n_qubits)?;
        self.run_in_place(&mut state)?;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_state(s: &StateVector, expected: &[Complex64]) {
        for (a, b) in s.amplitudes().iter().zip(expected) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn hadamard_on_zero() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply(&Gate::H(0)).unwrap();
        assert_state(&s, &[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]);
    }

    #[test]
    fn rx_pi_gives_minus_i_one() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply(&Gate::Rx(0, PI)).unwrap();
        assert_state(&s, &[c(0.0, 0.0), c(0.0, -1.0)]);
    }

    #[test]
    fn cnot_flips_target_when_control_set() {
        // |10> with qubit 0 written first is basis index 0b01.
        let mut s = StateVector::basis(2, 0b01).unwrap();
        s.apply(&Gate::Cnot { control: 0, target: 1 }).unwrap();
        assert_state(&s, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn empty_circuit_is_identity() {
        let s = StateVector::basis(3, 5).unwrap();
        let out = Circuit::new(3).run(&s).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn double_hadamard_is_identity() {
        let circ = Circuit::with_ops(1, vec![Gate::H(0), Gate::H(0)]);
        let out = circ.run_from_zero().unwrap();
        assert_state(&out, &[c(1.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn bell_preparation() {
        let circ = Circuit::with_ops(2, vec![Gate::H(0), Gate::Cnot { control: 0, target: 1 }]);
        let out = circ.run_from_zero().unwrap();
        let h = FRAC_1_SQRT_2;
        assert_state(&out, &[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]);
    }

    #[test]
    fn expectation_values() {
        let zero = StateVector::zero(1).unwrap();
        let one = StateVector::basis(1, 1).unwrap();
        let mut plus = StateVector::zero(1).unwrap();
        plus.apply(&Gate::H(0)).unwrap();
        assert_abs_diff_eq!(zero.expectation_z(0).unwrap(), 1.0);
        assert_abs_diff_eq!(one.expectation_z(0).unwrap(), -1.0);
        assert_abs_diff_eq!(plus.expectation_z(0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn probability_one_cases() {
        let one = StateVector::basis(1, 1).unwrap();
        assert_abs_diff_eq!(one.probability_one(0).unwrap(), 1.0);
        let mut plus = StateVector::zero(1).unwrap();
        plus.apply(&Gate::H(0)).unwrap();
        assert_abs_diff_eq!(plus.probability_one(0).unwrap(), 0.5, epsilon = 1e-15);
        let mut s = StateVector::zero(1).unwrap();
        s.apply(&Gate::Ry(0, 2.0 * 0.3f64.sqrt().asin())).unwrap();
        assert_abs_diff_eq!(s.probability_one(0).unwrap(), 0.3, epsilon = 1e-14);
        let z = s.expectation_z(0).unwrap();
        assert_abs_diff_eq!(s.probability_one(0).unwrap(), (1.0 - z) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn sampling_extremes_and_statistics() {
        let one = StateVector::basis(1, 1).unwrap();
        assert_eq!(one.sample(0, 100, 7).unwrap(), 100);
        let zero = StateVector::zero(1).unwrap();
        assert_eq!(zero.sample(0, 100, 7).unwrap(), 0);
        let mut plus = StateVector::zero(1).unwrap();
        plus.apply(&Gate::H(0)).unwrap();
        let shots = 100_000u64;
        let sigma = 0.5 / (shots as f64).sqrt();
        for seed in 0..20 {
            let frac = plus.sample(0, shots, seed).unwrap() as f64 / shots as f64;
            assert!((frac - 0.5).abs() <= 4.0 * sigma, "seed {seed}: {frac}");
        }
        assert_eq!(plus.sample(0, 1000, 3).unwrap(), plus.sample(0, 1000, 3).unwrap());
    }

    #[test]
    fn error_paths() {
        let mut s = StateVector::zero(2).unwrap();
        assert_eq!(
            s.apply(&Gate::H(2)),
            Err(SimError::IndexOutOfRange { index: 2, n_qubits: 2 })
        );
        assert_eq!(
            s.apply(&Gate::Cnot { control: 1, target: 1 }),
            Err(SimError::DuplicateQubit(1))
        );
        assert!(matches!(s.apply(&Gate::Ry(0, f64::NAN)), Err(SimError::NonFiniteAngle(_))));
        assert_eq!(s.sample(0, 0, 1), Err(SimError::ZeroShots));
        assert!(s.expectation_z(5).is_err());
        assert_eq!(StateVector::zero(13), Err(SimError::QubitCount(13)));
        let circ = Circuit::new(3);
        assert!(matches!(circ.run(&s), Err(SimError::QubitMismatch { .. })));
    }

    #[test]
    fn inverse_undoes_circuit() {
        let circ = Circuit::with_ops(
            3,
            vec![
                Gate::H(0),
                Gate::Rx(1, 0.3),
                Gate::Cry { control: 0, target: 2, angle: 1.1 },
                Gate::Rz(2, -0.7),
                Gate::Cz { control: 1, target: 2 },
                Gate::McZ { mask: 0b111 },
                Gate::Cnot { control: 2, target: 0 },
            ],
        );
        let mut s = circ.run_from_zero().unwrap();
        circ.inverse().run_in_place(&mut s).unwrap();
        assert_state(&s, &StateVector::zero(3).unwrap().amps);
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        let q = 0..n;
        let angle = -10.0f64..10.0;
        let pair = (0..n, 1..n).prop_map(move |(a, d)| (a, (a + d) % n));
        prop_oneof![
            q.clone().prop_map(Gate::H),
            q.clone().prop_map(Gate::X),
            q.clone().prop_map(Gate::Z),
            (q.clone(), angle.clone()).prop_map(|(q, a)| Gate::Rx(q, a)),
            (q.clone(), angle.clone()).prop_map(|(q, a)| Gate::Ry(q, a)),
            (q.clone(), angle.clone()).prop_map(|(q, a)| Gate::Rz(q, a)),
            pair.clone().prop_map(|(control, target)| Gate::Cnot { control, target }),
            pair.clone().prop_map(|(control, target)| Gate::Cz { control, target }),
            (pair, angle).prop_map(|((control, target), angle)| Gate::Cry { control, target, angle }),
        ]
    }

    fn arb_circuit() -> impl Strategy<Value = Circuit> {
        (2usize..=6).prop_flat_map(|n| {
            proptest::collection::vec(arb_gate(n), 0..=50).prop_map(move |ops| Circuit::with_ops(n, ops))
        })
    }

    fn arb_state(n: usize) -> impl Strategy<Value = StateVector> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n).prop_map(move |v| {
            StateVector::from_amplitudes(n, v.into_iter().map(|(r, i)| c(r, i)).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn circuits_preserve_norm(circ in arb_circuit()) {
            let out = circ.run_from_zero().unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() <= 1e-10);
            let p1 = out.probability_one(0).unwrap();
            let p0 = out.probability_zero(0).unwrap();
            prop_assert!((p0 + p1 - 1.0).abs() <= 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn circuits_are_linear(
            (circ, s1, s2) in arb_circuit().prop_flat_map(|c| {
                let n = c.n_qubits();
                (Just(c), arb_state(n), arb_state(n))
            }),
            alpha in (-2.0f64..2.0, -2.0f64..2.0),
            beta in (-2.0f64..2.0, -2.0f64..2.0),
        ) {
            let (alpha, beta) = (c(alpha.0, alpha.1), c(beta.0, beta.1));
            let n = circ.n_qubits();
            let mixed: Vec<_> = s1.amplitudes().iter().zip(s2.amplitudes())
                .map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = circ.run(&StateVector::from_amplitudes(n, mixed).unwrap()).unwrap();
            let r1 = circ.run(&s1).unwrap();
            let r2 = circ.run(&s2).unwrap();
            for ((l, a), b) in lhs.amplitudes().iter().zip(r1.amplitudes()).zip(r2.amplitudes()) {
                prop_assert!((l - (alpha * a + beta * b)).norm() <= 1e-10);
            }
        }

        #[test]
        fn composition_is_sequential(c1 in arb_circuit(), extra in proptest::collection::vec(arb_gate(2), 0..20)) {
            let n = c1.n_qubits();
            let c2 = Circuit::with_ops(n, extra);
            let mut joined = c1.clone();
            joined.append(&c2).unwrap();
            let a = joined.run_from_zero().unwrap();
            let b = c2.run(&c1.run_from_zero().unwrap()).unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                prop_assert!((x - y).norm() <= 1e-12);
            }
        }

        #[test]
        fn sampling_is_reproducible(seed in any::<u64>(), theta in 0.0f64..3.0) {
            let mut s = StateVector::zero(1).unwrap();
            s.apply(&Gate::Ry(0, theta)).unwrap();
            prop_assert_eq!(s.sample(0, 500, seed).unwrap(), s.sample(0, 500, seed).unwrap());
        }
    }
}
