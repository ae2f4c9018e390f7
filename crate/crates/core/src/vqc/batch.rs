//! Batched forward and adjoint passes of the ansatz. Amplitudes are stored
//! row-major as `[basis index][point]` with separate real and imaginary
//! planes, so every gate is a tight loop over points.

use num_complex::Complex64;

use super::{AnsatzSpec, ParamSet};

type M2 = [[Complex64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn dagger(a: &M2) -> M2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

fn rz(theta: f64) -> M2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let z = Complex64::new(0.0, 0.0);
    [[Complex64::new(c, -s), z], [z, Complex64::new(c, s)]]
}

fn ry(theta: f64) -> M2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let r = |x: f64| Complex64::new(x, 0.0);
    [[r(c), r(-s)], [r(s), r(c)]]
}

const PAULI_Y: M2 = [
    [Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)],
    [Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)],
];
const PAULI_Z: M2 = [
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    [Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
];

/// Per-qubit rotation block `RZ(g) RY(b) RZ(a)` and the generators of its three
/// angles, each conjugated to the position just after the block.
struct Block {
    u: M2,
    u_dag: M2,
    generators: [M2; 3],
}

impl Block {
    fn new(a: f64, b: f64, g: f64) -> Self {
        let rz_g = rz(g);
        let outer = mul(&rz_g, &ry(b));
        let u = mul(&outer, &rz(a));
        let gen_a = mul(&mul(&outer, &PAULI_Z), &dagger(&outer));
        let gen_b = mul(&mul(&rz_g, &PAULI_Y), &dagger(&rz_g));
        Self { u, u_dag: dagger(&u), generators: [gen_a, gen_b, PAULI_Z] }
    }
}

pub(super) struct Engine {
    ansatz: AnsatzSpec,
    blocks: Vec<Block>,
    /// Basis index after the CNOT chain, for each index before it.
    chain: Vec<usize>,
}

pub(super) struct Planes {
    width: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    scratch_re: Vec<f64>,
    scratch_im: Vec<f64>,
}

impl Planes {
    fn new(dim: usize, width: usize) -> Self {
        Self {
            width,
            re: vec![0.0; dim * width],
            im: vec![0.0; dim * width],
            scratch_re: vec![0.0; dim * width],
            scratch_im: vec![0.0; dim * width],
        }
    }

    fn reset_zero(&mut self) {
        self.re.fill(0.0);
        self.im.fill(0.0);
        self.re[..self.width].fill(1.0);
    }
}

fn rows(v: &mut [f64], i: usize, j: usize, w: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let (lo, hi) = v.split_at_mut(j * w);
    (&mut lo[i * w..(i + 1) * w], &mut hi[..w])
}

fn pairs(dim: usize, q: usize) -> impl Iterator<Item = (usize, usize)> {
    let bit = 1usize << q;
    (0..dim).filter(move |i| i & bit == 0).map(move |i| (i, i | bit))
}

impl Engine {
    pub(super) fn new(ansatz: &AnsatzSpec, params: &ParamSet) -> Self {
        let p = params.as_slice();
        let n = ansatz.n_qubits;
        let blocks = (0..=ansatz.n_layers)
            .flat_map(|layer| (0..n).map(move |q| (layer, q)))
            .map(|(layer, q)| {
                let base = ParamSet::index(ansatz, layer, q, 0);
                Block::new(p[base], p[base + 1], p[base + 2])
            })
            .collect();
        let chain = (0..1usize << n)
            .map(|mut i| {
                for q in 0..n.saturating_sub(1) {
                    if i >> q & 1 == 1 {
                        i ^= 1 << (q + 1);
                    }
                }
                i
            })
            .collect();
        Self { ansatz: *ansatz, blocks, chain }
    }

    pub(super) fn planes(&self, width: usize) -> Planes {
        Planes::new(1 << self.ansatz.n_qubits, width)
    }

    fn dim(&self) -> usize {
        1 << self.ansatz.n_qubits
    }

    fn apply_matrix(&self, s: &mut Planes, q: usize, u: &M2) {
        let w = s.width;
        let [[u00, u01], [u10, u11]] = *u;
        for (i, j) in pairs(self.dim(), q) {
            let (ar, br) = rows(&mut s.re, i, j, w);
            let (ai, bi) = rows(&mut s.im, i, j, w);
            for p in 0..w {
                let (xr, xi, yr, yi) = (ar[p], ai[p], br[p], bi[p]);
                ar[p] = u00.re * xr - u00.im * xi + u01.re * yr - u01.im * yi;
                ai[p] = u00.re * xi + u00.im * xr + u01.re * yi + u01.im * yr;
                br[p] = u10.re * xr - u10.im * xi + u11.re * yr - u11.im * yi;
                bi[p] = u10.re * xi + u10.im * xr + u11.re * yi + u11.im * yr;
            }
        }
    }

    /// `RX` with a per-point angle given as `cos(theta/2)`, `sin(theta/2)`.
    fn apply_rx(&self, s: &mut Planes, q: usize, cos: &[f64], sin: &[f64]) {
        let w = s.width;
        for (i, j) in pairs(self.dim(), q) {
            let (ar, br) = rows(&mut s.re, i, j, w);
            let (ai, bi) = rows(&mut s.im, i, j, w);
            for p in 0..w {
                let (c, sn) = (cos[p], sin[p]);
                let (xr, xi, yr, yi) = (ar[p], ai[p], br[p], bi[p]);
                ar[p] = c * xr + sn * yi;
                ai[p] = c * xi - sn * yr;
                br[p] = c * yr + sn * xi;
                bi[p] = c * yi - sn * xr;
            }
        }
    }

    fn apply_chain(&self, s: &mut Planes, inverse: bool) {
        let w = s.width;
        for (from, &to) in self.chain.iter().enumerate() {
            let (src, dst) = if inverse { (to, from) } else { (from, to) };
            s.scratch_re[dst * w..(dst + 1) * w].copy_from_slice(&s.re[src * w..(src + 1) * w]);
            s.scratch_im[dst * w..(dst + 1) * w].copy_from_slice(&s.im[src * w..(src + 1) * w]);
        }
        std::mem::swap(&mut s.re, &mut s.scratch_re);
        std::mem::swap(&mut s.im, &mut s.scratch_im);
    }

    fn block(&self, layer: usize, q: usize) -> &Block {
        &self.blocks[layer * self.ansatz.n_qubits + q]
    }

    /// Half-angle cosines and sines of the encoding rotations, one row per variable.
    pub(super) fn encoding_trig(&self, angles: &[Vec<f64>]) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..self.ansatz.n_variables)
            .map(|d| angles.iter().map(|a| (a[d] / 2.0).sin_cos()).map(|(s, c)| (c, s)).unzip())
            .collect()
    }

    /// Runs the circuit for every point in the batch from `|0...0>`.
    pub(super) fn forward(&self, s: &mut Planes, trig: &[(Vec<f64>, Vec<f64>)]) {
        s.reset_zero();
        let n = self.ansatz.n_qubits;
        for layer in 0..=self.ansatz.n_layers {
            for q in 0..n {
                self.apply_matrix(s, q, &self.block(layer, q).u);
            }
            if layer == self.ansatz.n_layers {
                break;
            }
            self.apply_chain(s, false);
            for q in 0..n {
                let (c, sn) = &trig[self.ansatz.variable_of(q)];
                self.apply_rx(s, q, c, sn);
            }
        }
    }

    /// `<Z>` on the measured qubit, per point.
    pub(super) fn expectation(&self, s: &Planes) -> Vec<f64> {
        let w = s.width;
        let bit = 1usize << self.ansatz.measured_qubit;
        let mut out = vec![0.0; w];
        for i in 0..self.dim() {
            let sign = if i & bit == 0 { 1.0 } else { -1.0 };
            let (r, im) = (&s.re[i * w..(i + 1) * w], &s.im[i * w..(i + 1) * w]);
            for p in 0..w {
                out[p] += sign * (r[p] * r[p] + im[p] * im[p]);
            }
        }
        out
    }

    /// Adds `sum_p weight_p * d<Z>_p / d(theta)` to `grad`. `phi` must hold
    /// the forward states; it and `lambda` are consumed as scratch.
    pub(super) fn backward(
        &self,
        phi: &mut Planes,
        lambda: &mut Planes,
        trig: &[(Vec<f64>, Vec<f64>)],
        weights: &[f64],
        grad: &mut [f64],
    ) {
        let w = phi.width;
        let bit = 1usize << self.ansatz.measured_qubit;
        for i in 0..self.dim() {
            let sign = if i & bit == 0 { 1.0 } else { -1.0 };
            for p in 0..w {
                let k = i * w + p;
                lambda.re[k] = sign * weights[p] * phi.re[k];
                lambda.im[k] = sign * weights[p] * phi.im[k];
            }
        }
        let n = self.ansatz.n_qubits;
        let neg_trig: Vec<(Vec<f64>, Vec<f64>)> =
            trig.iter().map(|(c, s)| (c.clone(), s.iter().map(|x| -x).collect())).collect();
        for layer in (0..=self.ansatz.n_layers).rev() {
            if layer < self.ansatz.n_layers {
                for q in (0..n).rev() {
                    let (c, sn) = &neg_trig[self.ansatz.variable_of(q)];
                    self.apply_rx(phi, q, c, sn);
                    self.apply_rx(lambda, q, c, sn);
                }
                self.apply_chain(phi, true);
                self.apply_chain(lambda, true);
            }
            for q in (0..n).rev() {
                let block = self.block(layer, q);
                let overlap = self.overlap(lambda, phi, q);
                let base = ParamSet::index(&self.ansatz, layer, q, 0);
                for (slot, gen) in block.generators.iter().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for x in 0..2 {
                        for y in 0..2 {
                            acc += gen[x][y] * overlap[x][y];
                        }
                    }
                    grad[base + slot] += acc.im;
                }
                self.apply_matrix(phi, q, &block.u_dag);
                self.apply_matrix(lambda, q, &block.u_dag);
            }
        }
    }

    /// `S[x][y] = sum over points and pairs of conj(lambda_x) * phi_y`.
    fn overlap(&self, lambda: &Planes, phi: &Planes, q: usize) -> M2 {
        let w = phi.width;
        let mut acc = [[0.0f64; 4]; 2];
        let mut acc_im = [[0.0f64; 4]; 2];
        for (i, j) in pairs(self.dim(), q) {
            let idx = [i, j];
            for x in 0..2 {
                let lr = &lambda.re[idx[x] * w..(idx[x] + 1) * w];
                let li = &lambda.im[idx[x] * w..(idx[x] + 1) * w];
                for y in 0..2 {
                    let pr = &phi.re[idx[y] * w..(idx[y] + 1) * w];
                    let pi = &phi.im[idx[y] * w..(idx[y] + 1) * w];
                    let (mut sr, mut si) = (0.0, 0.0);
                    for p in 0..w {
                        sr += lr[p] * pr[p] + li[p] * pi[p];
                        si += lr[p] * pi[p] - li[p] * pr[p];
                    }
                    acc[x][y] += sr;
                    acc_im[x][y] += si;
                }
            }
        }
        let c = |x: usize, y: usize| Complex64::new(acc[x][y], acc_im[x][y]);
        [[c(0, 0), c(0, 1)], [c(1, 0), c(1, 1)]]
    }
}
