//! Data re-uploading quantum neural network.
//!
//! Each layer is a trainable `RZ RY RZ` block on every qubit, a linear CNOT
//! chain `q -> q+1`, then `RX(scale_d * x_d)` on every qubit assigned to
//! variable `d`. A trailing trainable block closes the circuit and `<Z>` is
//! read on the measured qubit. Variable `d` owns qubits
//! `d * encodings_per_variable .. (d + 1) * encodings_per_variable`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statevec::{Circuit, Gate, SimError, StateVector, MAX_QUBITS};

mod batch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VqcError {
    #[error("invalid ansatz: {0}")]
    Ansatz(String),
    #[error("expected {expected} parameters, got {got}")]
    ParamShape { expected: usize, got: usize },
    #[error("expected input of length {expected}, got {got}")]
    InputShape { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has {points} points but {targets} targets")]
    DatasetLength { points: usize, targets: usize },
    #[error("dataset point {index} lies outside the unit box")]
    OutsideUnitBox { index: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss became non-finite at step {step} of restart {restart}")]
    NonFiniteLoss { step: usize, restart: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub encodings_per_variable: usize,
    pub n_variables: usize,
    pub measured_qubit: usize,
}

impl Default for AnsatzSpec {
    fn default() -> Self {
        Self { n_qubits: 6, n_layers: 20, encodings_per_variable: 3, n_variables: 2, measured_qubit: 0 }
    }
}

impl AnsatzSpec {
    pub fn with_layers(n_layers: usize) -> Self {
        Self { n_layers, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), VqcError> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(VqcError::Ansatz(format!("{} qubits", self.n_qubits)));
        }
        if self.n_variables == 0 || self.encodings_per_variable == 0 {
            return Err(VqcError::Ansatz("no encoded variables".into()));
        }
        if self.n_variables * self.encodings_per_variable != self.n_qubits {
            return Err(VqcError::Ansatz(format!(
                "{} variables x {} encodings does not cover {} qubits",
                self.n_variables, self.encodings_per_variable, self.n_qubits
            )));
        }
        if self.measured_qubit >= self.n_qubits {
            return Err(VqcError::Ansatz(format!("measured qubit {}", self.measured_qubit)));
        }
        Ok(())
    }

    /// Number of trainable angles, trailing block included.
    pub fn n_params(&self) -> usize {
        (self.n_layers + 1) * self.n_qubits * 3
    }

    pub fn variable_of(&self, qubit: usize) -> usize {
        qubit / self.encodings_per_variable
    }

    /// Depth of one layer: variational step, CNOT chain, encoding step.
    pub fn layer_depth(&self) -> usize {
        1 + self.n_qubits.saturating_sub(1) + 1
    }

    /// `n_layers * layer_depth()`; the trailing variational block is not counted.
    pub fn total_depth(&self) -> usize {
        self.n_layers * self.layer_depth()
    }

    /// Largest integer frequency the model can carry in each encoded angle.
    pub fn spectrum_bound(&self) -> usize {
        self.encodings_per_variable * self.n_layers
    }
}

/// Trainable angles, laid out as `[layer][qubit][rz, ry, rz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    values: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(ansatz: &AnsatzSpec) -> Self {
        Self { values: vec![0.0; ansatz.n_params()] }
    }

    /// Uniform in `[-pi, pi]`.
    pub fn random(ansatz: &AnsatzSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { values: (0..ansatz.n_params()).map(|_| rng.gen_range(-PI..=PI)).collect() }
    }

    pub fn from_flat(ansatz: &AnsatzSpec, values: Vec<f64>) -> Result<Self, VqcError> {
        if values.len() != ansatz.n_params() {
            return Err(VqcError::ParamShape { expected: ansatz.n_params(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VqcError::NonFinite("parameters"));
        }
        Ok(Self { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn index(ansatz: &AnsatzSpec, layer: usize, qubit: usize, slot: usize) -> usize {
        (layer * ansatz.n_qubits + qubit) * 3 + slot
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QnnModel {
    pub ansatz: AnsatzSpec,
    pub params: ParamSet,
    pub input_scale: Vec<f64>,
    pub output_scale: f64,
    pub output_offset: f64,
}

impl QnnModel {
    pub fn new(ansatz: AnsatzSpec, params: ParamSet) -> Result<Self, VqcError> {
        ansatz.validate()?;
        if params.values.len() != ansatz.n_params() {
            return Err(VqcError::ParamShape { expected: ansatz.n_params(), got: params.values.len() });
        }
        Ok(Self {
            input_scale: vec![1.0; ansatz.n_variables],
            ansatz,
            params,
            output_scale: 1.0,
            output_offset: 0.0,
        })
    }

    pub fn random(ansatz: AnsatzSpec, seed: u64) -> Result<Self, VqcError> {
        Self::new(ansatz, ParamSet::random(&ansatz, seed))
    }

    fn check_input(&self, input: &[f64]) -> Result<(), VqcError> {
        if input.len() != self.ansatz.n_variables {
            return Err(VqcError::InputShape { expected: self.ansatz.n_variables, got: input.len() });
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(VqcError::NonFinite("input"));
        }
        Ok(())
    }

    /// Encoded angles `input_scale_d * x_d`.
    pub fn encoded_angles(&self, input: &[f64]) -> Vec<f64> {
        input.iter().zip(&self.input_scale).map(|(x, s)| x * s).collect()
    }

    pub fn build_circuit(&self, input: &[f64]) -> Result<Circuit, VqcError> {
        self.check_input(input)?;
        Ok(build_circuit(&self.ansatz, &self.params, &self.encoded_angles(input)))
    }

    /// `<Z>` before output scaling, as a function of raw encoded angles.
    pub fn expectation_at_angles(&self, angles: &[f64]) -> Result<f64, VqcError> {
        if angles.len() != self.ansatz.n_variables {
            return Err(VqcError::InputShape { expected: self.ansatz.n_variables, got: angles.len() });
        }
        let mut state = StateVector::zero(self.ansatz.n_qubits)?;
        run_program(&self.ansatz, self.params.as_slice(), angles, &mut state);
        Ok(state.expectation_z(self.ansatz.measured_qubit)?)
    }

    /// `<Z>` before output scaling.
    pub fn raw_output(&self, input: &[f64]) -> Result<f64, VqcError> {
        self.check_input(input)?;
        self.expectation_at_angles(&self.encoded_angles(input))
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64, VqcError> {
        Ok(self.output_offset + self.output_scale * self.raw_output(input)?)
    }

    /// `forward` over many inputs, evaluated in batches.
    pub fn forward_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>, VqcError> {
        self.ansatz.validate()?;
        for x in inputs {
            self.check_input(x)?;
        }
        let engine = batch::Engine::new(&self.ansatz, &self.params);
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(BATCH) {
            let mut phi = engine.planes(chunk.len());
            let angles: Vec<Vec<f64>> = chunk.iter().map(|x| self.encoded_angles(x)).collect();
            engine.forward(&mut phi, &engine.encoding_trig(&angles));
            out.extend(engine.expectation(&phi).iter().map(|z| self.output_offset + self.output_scale * z));
        }
        Ok(out)
    }

    /// Mean squared error of `forward` against the dataset targets.
    pub fn loss(&self, dataset: &Dataset) -> Result<f64, VqcError> {
        dataset.check()?;
        let mut acc = 0.0;
        for (x, y) in dataset.points.iter().zip(&dataset.targets) {
            let r = self.forward(x)? - y;
            acc += r * r;
        }
        Ok(acc / dataset.len() as f64)
    }
}

/// Builds the full gate sequence for one input, given already-scaled angles.
pub fn build_circuit(ansatz: &AnsatzSpec, params: &ParamSet, angles: &[f64]) -> Circuit {
    let n = ansatz.n_qubits;
    let p = params.as_slice();
    let mut circ = Circuit::new(n);
    let variational = |circ: &mut Circuit, layer: usize| {
        for q in 0..n {
            let base = ParamSet::index(ansatz, layer, q, 0);
            circ.push(Gate::Rz(q, p[base]));
            circ.push(Gate::Ry(q, p[base + 1]));
            circ.push(Gate::Rz(q, p[base + 2]));
        }
    };
    for layer in 0..ansatz.n_layers {
        variational(&mut circ, layer);
        for q in 0..n.saturating_sub(1) {
            circ.push(Gate::Cnot { control: q, target: q + 1 });
        }
        for q in 0..n {
            circ.push(Gate::Rx(q, angles[ansatz.variable_of(q)]));
        }
    }
    variational(&mut circ, ansatz.n_layers);
    circ
}

/// Runs the ansatz directly on a state, without materializing a `Circuit`.
fn run_program(ansatz: &AnsatzSpec, p: &[f64], angles: &[f64], state: &mut StateVector) {
    let n = ansatz.n_qubits;
    for layer in 0..=ansatz.n_layers {
        for q in 0..n {
            let base = ParamSet::index(ansatz, layer, q, 0);
            state.apply_unchecked(&Gate::Rz(q, p[base]));
            state.apply_unchecked(&Gate::Ry(q, p[base + 1]));
            state.apply_unchecked(&Gate::Rz(q, p[base + 2]));
        }
        if layer == ansatz.n_layers {
            break;
        }
        for q in 0..n - 1 {
            state.apply_unchecked(&Gate::Cnot { control: q, target: q + 1 });
        }
        for q in 0..n {
            state.apply_unchecked(&Gate::Rx(q, angles[ansatz.variable_of(q)]));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, VqcError> {
        let ds = Self { points, targets };
        ds.check()?;
        Ok(ds)
    }

    /// Cell-midpoint grid of `n x n` points over the unit square.
    pub fn grid_2d<E>(n: usize, mut f: impl FnMut(f64, f64) -> Result<f64, E>) -> Result<Self, E> {
        let mut points = Vec::with_capacity(n * n);
        let mut targets = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let u = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                targets.push(f(u[0], u[1])?);
                points.push(u.to_vec());
            }
        }
        Ok(Self { points, targets })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check(&self) -> Result<(), VqcError> {
        if self.points.is_empty() {
            return Err(VqcError::EmptyDataset);
        }
        if self.points.len() != self.targets.len() {
            return Err(VqcError::DatasetLength { points: self.points.len(), targets: self.targets.len() });
        }
        for (index, p) in self.points.iter().enumerate() {
            if p.iter().any(|x| !(0.0..1.0).contains(x)) {
                return Err(VqcError::OutsideUnitBox { index });
            }
        }
        if self.targets.iter().any(|t| !t.is_finite()) {
            return Err(VqcError::NonFinite("targets"));
        }
        Ok(())
    }

    /// Affine map sending the target range onto `[-margin, margin]`, returned
    /// as `(scale, offset)` with `original = offset + scale * normalized`.
    pub fn normalization(&self, margin: f64) -> (f64, f64) {
        let lo = self.targets.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        if half <= f64::EPSILON * mid.abs().max(1.0) {
            // Constant targets: any scale works; keep unit scale.
            (1.0, mid)
        } else {
            (half / margin, mid)
        }
    }

    pub fn normalized(&self, scale: f64, offset: f64) -> Dataset {
        Dataset {
            points: self.points.clone(),
            targets: self.targets.iter().map(|t| (t - offset) / scale).collect(),
        }
    }
}

const BATCH: usize = 128;

/// Loss and its gradient with respect to every trainable angle, computed by
/// adjoint differentiation over batches of points. Agrees with
/// [`parameter_shift_gradient`].
pub fn adjoint_loss_gradient(model: &QnnModel, dataset: &Dataset) -> Result<(f64, Vec<f64>), VqcError> {
    dataset.check()?;
    model.ansatz.validate()?;
    for x in &dataset.points {
        model.check_input(x)?;
    }
    let n = dataset.len() as f64;
    let engine = batch::Engine::new(&model.ansatz, &model.params);
    let mut grad = vec![0.0; model.ansatz.n_params()];
    let mut loss = 0.0;
    for (points, targets) in dataset.points.chunks(BATCH).zip(dataset.targets.chunks(BATCH)) {
        let mut phi = engine.planes(points.len());
        let mut lambda = engine.planes(points.len());
        let angles: Vec<Vec<f64>> = points.iter().map(|x| model.encoded_angles(x)).collect();
        let trig = engine.encoding_trig(&angles);
        engine.forward(&mut phi, &trig);
        let z = engine.expectation(&phi);
        let weights: Vec<f64> = z
            .iter()
            .zip(targets)
            .map(|(z, y)| {
                let r = model.output_offset + model.output_scale * z - y;
                loss += r * r;
                2.0 * r * model.output_scale / n
            })
            .collect();
        engine.backward(&mut phi, &mut lambda, &trig, &weights, &mut grad);
    }
    Ok((loss / n, grad))
}

/// Gradient of the MSE loss by the parameter-shift rule: each angle's
/// derivative of `<Z>` is `[f(theta + pi/2) - f(theta - pi/2)] / 2`.
pub fn parameter_shift_gradient(model: &QnnModel, dataset: &Dataset) -> Result<Vec<f64>, VqcError> {
    dataset.check()?;
    let n = dataset.len() as f64;
    let mut shifted = model.clone();
    let mut grad = vec![0.0; model.ansatz.n_params()];
    for (x, y) in dataset.points.iter().zip(&dataset.targets) {
        let residual = model.forward(x)? - y;
        let angles = model.encoded_angles(x);
        for (k, g) in grad.iter_mut().enumerate() {
            let theta = model.params.values[k];
            shifted.params.values[k] = theta + PI / 2.0;
            let plus = shifted.expectation_at_angles(&angles)?;
            shifted.params.values[k] = theta - PI / 2.0;
            let minus = shifted.expectation_at_angles(&angles)?;
            shifted.params.values[k] = theta;
            *g += 2.0 * residual * model.output_scale * 0.5 * (plus - minus) / n;
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_adam: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Stop a restart, and skip the remaining ones, once the loss reaches this.
    pub target_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 15000,
            step_size: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_adam: 1e-8,
            seed: 0,
            restarts: 3,
            target_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VqcError> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(VqcError::Config(format!("step_size {}", self.step_size)));
        }
        if self.max_steps == 0 {
            return Err(VqcError::Config("max_steps must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(VqcError::Config("restarts must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon_adam <= 0.0 {
            return Err(VqcError::Config("Adam constants out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Parameters with the lowest loss seen across all restarts.
    pub model: QnnModel,
    pub best_loss: f64,
    /// Index of the restart that produced `model`.
    pub best_restart: usize,
    /// Per-step loss of every restart that ran, in order.
    pub loss_history: Vec<Vec<f64>>,
}

impl TrainReport {
    pub fn steps_executed(&self) -> usize {
        self.loss_history.iter().map(Vec::len).sum()
    }
}

/// Adam on the MSE loss. Restart 0 starts from `model`'s parameters; later
/// restarts draw fresh angles from `seed + restart`. Deterministic for a
/// fixed config.
pub fn train(model: &QnnModel, dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport, VqcError> {
    config.validate()?;
    dataset.check()?;
    model.ansatz.validate()?;

    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut histories = Vec::new();
    for restart in 0..config.restarts {
        let mut current = model.clone();
        if restart > 0 {
            current.params = ParamSet::random(&model.ansatz, config.seed.wrapping_add(restart as u64));
        }
        let mut m = vec![0.0; current.ansatz.n_params()];
        let mut v = m.clone();
        let mut history = Vec::with_capacity(config.max_steps);
        let mut reached = false;
        for step in 0..config.max_steps {
            let (loss, grad) = adjoint_loss_gradient(&current, dataset)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(VqcError::NonFiniteLoss { step, restart });
            }
            history.push(loss);
            if best.as_ref().map_or(true, |(b, _, _)| loss < *b) {
                best = Some((loss, restart, current.params.clone()));
            }
            if config.target_loss.is_some_and(|t| loss <= t) {
                reached = true;
                break;
            }
            let t = (step + 1) as i32;
            let bc1 = 1.0 - config.beta1.powi(t);
            let bc2 = 1.0 - config.beta2.powi(t);
            for ((theta, g), (mk, vk)) in
                current.params.values.iter_mut().zip(&grad).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mk = config.beta1 * *mk + (1.0 - config.beta1) * g;
                *vk = config.beta2 * *vk + (1.0 - config.beta2) * g * g;
                *theta -= config.step_size * (*mk / bc1) / ((*vk / bc2).sqrt() + config.epsilon_adam);
            }
        }
        histories.push(history);
        if reached {
            break;
        }
    }
    let (best_loss, best_restart, params) = best.expect("at least one step ran");
    let mut out = model.clone();
    out.params = params;
    Ok(TrainReport { model: out, best_loss, best_restart, loss_history: histories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small() -> AnsatzSpec {
        AnsatzSpec { n_qubits: 4, n_layers: 2, encodings_per_variable: 2, n_variables: 2, measured_qubit: 0 }
    }

    #[test]
    fn one_layer_gate_counts() {
        let ansatz = AnsatzSpec::with_layers(1);
        let params = ParamSet::zeros(&ansatz);
        let circ = build_circuit(&ansatz, &params, &[0.1, 0.2]);
        let count = |f: fn(&Gate) -> bool| circ.ops().iter().filter(|g| f(g)).count();
        assert_eq!(count(|g| matches!(g, Gate::Cnot { .. })), 5);
        assert_eq!(count(|g| matches!(g, Gate::Rx(..))), 6);
        // Two variational blocks of RZ RY RZ on 6 qubits.
        assert_eq!(count(|g| matches!(g, Gate::Ry(..))), 12);
        assert_eq!(count(|g| matches!(g, Gate::Rz(..))), 24);
    }

    #[test]
    fn depth_of_default_ansatz() {
        let ansatz = AnsatzSpec::default();
        assert_eq!(ansatz.layer_depth(), 7);
        assert_eq!(ansatz.total_depth(), 140);
        assert_eq!(ansatz.spectrum_bound(), 60);
    }

    #[test]
    fn zero_params_zero_input_is_identity() {
        let ansatz = AnsatzSpec::default();
        let model = QnnModel::new(ansatz, ParamSet::zeros(&ansatz)).unwrap();
        let circ = model.build_circuit(&[0.0, 0.0]).unwrap();
        let out = circ.run_from_zero().unwrap();
        assert_abs_diff_eq!(out.amplitudes()[0].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(model.forward(&[0.0, 0.0]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fast_path_matches_circuit() {
        let model = QnnModel::random(AnsatzSpec::with_layers(3), 11).unwrap();
        for x in [[0.1, 0.7], [0.5, 0.5], [0.93, 0.02]] {
            let via_circuit =
                model.build_circuit(&x).unwrap().run_from_zero().unwrap().expectation_z(0).unwrap();
            assert_abs_diff_eq!(model.raw_output(&x).unwrap(), via_circuit, epsilon = 1e-13);
        }
    }

    #[test]
    fn batch_forward_matches_scalar() {
        let mut model = QnnModel::random(AnsatzSpec::with_layers(4), 2).unwrap();
        model.output_scale = 0.3;
        model.output_offset = -0.2;
        let inputs: Vec<Vec<f64>> = (0..150).map(|i| vec![i as f64 * 0.05, 1.0 - i as f64 * 0.01]).collect();
        let batch = model.forward_batch(&inputs).unwrap();
        for (x, b) in inputs.iter().zip(&batch) {
            assert_abs_diff_eq!(model.forward(x).unwrap(), *b, epsilon = 1e-13);
        }
    }

    #[test]
    fn output_bounded_and_periodic() {
        let mut model = QnnModel::random(small(), 5).unwrap();
        model.input_scale = vec![1.5, 0.75];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let z = model.raw_output(&x).unwrap();
            assert!(z.abs() <= 1.0 + 1e-12);
            let shifted = [x[0] + 2.0 * PI / 1.5, x[1] + 2.0 * PI / 0.75];
            assert_abs_diff_eq!(model.raw_output(&shifted).unwrap(), z, epsilon = 1e-10);
        }
    }

    #[test]
    fn shape_errors() {
        let ansatz = small();
        assert!(matches!(
            ParamSet::from_flat(&ansatz, vec![0.0; 3]),
            Err(VqcError::ParamShape { .. })
        ));
        let model = QnnModel::random(ansatz, 1).unwrap();
        assert!(matches!(model.forward(&[0.1]), Err(VqcError::InputShape { .. })));
        let bad = AnsatzSpec { n_qubits: 5, ..small() };
        assert!(bad.validate().is_err());
        let empty = Dataset { points: vec![], targets: vec![] };
        assert_eq!(parameter_shift_gradient(&model, &empty), Err(VqcError::EmptyDataset));
    }

    fn random_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let targets = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Dataset::new(points, targets).unwrap()
    }

    #[test]
    fn gradient_zero_at_exact_fit() {
        let model = QnnModel::random(small(), 3).unwrap();
        let x = vec![0.3, 0.8];
        let ds = Dataset::new(vec![x.clone()], vec![model.forward(&x).unwrap()]).unwrap();
        for g in parameter_shift_gradient(&model, &ds).unwrap() {
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn parameter_shift_matches_finite_differences() {
        let mut model = QnnModel::random(small(), 21).unwrap();
        model.output_scale = 0.7;
        model.output_offset = 0.1;
        let ds = random_dataset(4, 2);
        let grad = parameter_shift_gradient(&model, &ds).unwrap();
        let h = 1e-4;
        for k in 0..model.ansatz.n_params() {
            let mut plus = model.clone();
            plus.params.values[k] += h;
            let mut minus = model.clone();
            minus.params.values[k] -= h;
            let fd = (plus.loss(&ds).unwrap() - minus.loss(&ds).unwrap()) / (2.0 * h);
            let tol = 1e-5 * fd.abs().max(1e-3);
            assert!((grad[k] - fd).abs() <= tol, "param {k}: shift {} vs fd {fd}", grad[k]);
        }
    }

    #[test]
    fn adjoint_matches_parameter_shift() {
        let mut model = QnnModel::random(AnsatzSpec::with_layers(2), 8).unwrap();
        model.output_scale = 1.3;
        let ds = random_dataset(5, 4);
        let shift = parameter_shift_gradient(&model, &ds).unwrap();
        let (loss, adj) = adjoint_loss_gradient(&model, &ds).unwrap();
        assert_abs_diff_eq!(loss, model.loss(&ds).unwrap(), epsilon = 1e-14);
        for (a, b) in adj.iter().zip(&shift) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn doubling_residuals_doubles_gradient() {
        let model = QnnModel::random(small(), 6).unwrap();
        let ds = random_dataset(3, 7);
        let preds: Vec<f64> = ds.points.iter().map(|x| model.forward(x).unwrap()).collect();
        let doubled = Dataset::new(
            ds.points.clone(),
            ds.targets.iter().zip(&preds).map(|(t, p)| p - 2.0 * (p - t)).collect(),
        )
        .unwrap();
        let g1 = parameter_shift_gradient(&model, &ds).unwrap();
        let g2 = parameter_shift_gradient(&model, &doubled).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert_abs_diff_eq!(2.0 * a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn training_at_fixed_point_stays_put() {
        let model = QnnModel::random(small(), 12).unwrap();
        let ds = Dataset::grid_2d(4, |a, b| model.forward(&[a, b])).unwrap();
        let cfg = TrainConfig { max_steps: 20, restarts: 1, ..TrainConfig::default() };
        let report = train(&model, &ds, &cfg).unwrap();
        assert!(report.best_loss <= 1e-10);
        assert_eq!(report.loss_history[0].len(), 20);
        assert_eq!(report.steps_executed(), 20);
    }

    #[test]
    fn training_is_deterministic_and_decreases_loss() {
        let model = QnnModel::random(small(), 1).unwrap();
        let ds = Dataset::grid_2d(5, |a, b| Ok::<_, VqcError>(0.3 * (2.0 * a).sin() - 0.2 * b)).unwrap();
        let cfg = TrainConfig { max_steps: 150, step_size: 0.05, restarts: 2, seed: 4, ..TrainConfig::default() };
        let r1 = train(&model, &ds, &cfg).unwrap();
        let r2 = train(&model, &ds, &cfg).unwrap();
        assert_eq!(r1.loss_history, r2.loss_history);
        assert_eq!(r1.loss_history.len(), 2);
        assert!(r1.best_loss < r1.loss_history[0][0]);
        assert_abs_diff_eq!(r1.model.loss(&ds).unwrap(), r1.best_loss, epsilon = 1e-12);
    }

    #[test]
    fn target_loss_stops_early() {
        let model = QnnModel::random(small(), 12).unwrap();
        let ds = Dataset::grid_2d(3, |a, b| model.forward(&[a, b])).unwrap();
        let cfg = TrainConfig { max_steps: 100, target_loss: Some(1e-12), ..TrainConfig::default() };
        let report = train(&model, &ds, &cfg).unwrap();
        assert_eq!(report.loss_history, vec![vec![report.best_loss]]);
    }

    #[test]
    fn normalization_maps_range() {
        let ds = Dataset::new(vec![vec![0.1, 0.1], vec![0.2, 0.2]], vec![2.0, 6.0]).unwrap();
        let (scale, offset) = ds.normalization(0.9);
        let n = ds.normalized(scale, offset);
        assert_abs_diff_eq!(n.targets[0], -0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(n.targets[1], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = TrainConfig { step_size: 0.0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { max_steps: 0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
