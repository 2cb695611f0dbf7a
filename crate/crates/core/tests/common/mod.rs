#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nvgf::filters::{LsiTaps, NvTaps};
use nvgf::graph::GraphShift;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense symmetric matrix with uniform entries, unit spectral norm.
pub fn dense_graph(n: usize, rng: &mut impl Rng) -> GraphShift {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    GraphShift::new((&a + a.transpose()) * 0.5)
        .unwrap()
        .spectral_normalize()
        .unwrap()
}

pub fn gaussian(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn nv_taps(n: usize, k: usize, rng: &mut impl Rng) -> NvTaps {
    NvTaps::new(DMatrix::from_fn(n, k + 1, |_, _| rng.random_range(-1.0..1.0))).unwrap()
}

pub fn lsi_taps(k: usize, rng: &mut impl Rng) -> LsiTaps {
    LsiTaps::new(DVector::from_fn(k + 1, |_, _| rng.random_range(-1.0..1.0))).unwrap()
}

/// `Σ_k diag(h_k) Sᵏ` built from explicit matrix powers.
pub fn dense_nv(taps: &NvTaps, s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let mut out = DMatrix::zeros(n, n);
    let mut p = DMatrix::identity(n, n);
    for k in 0..=taps.order() {
        out += DMatrix::from_diagonal(&taps.shift_weights(k)) * &p;
        p = s * p;
    }
    out
}

/// Evaluate a polynomial with coefficients in increasing degree.
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Vertex-domain quadratic model of the per-node MSE.
///
/// For centered inputs `d_s` and targets `r_s`, node `i` has
/// `MSE_i(h) = hᵀ G h − 2 bᵀ h + c` with `G[k][l] = ⟨(Sᵏd)_i, (Sˡd)_i⟩`,
/// averaged with divisor `n − 1`.
pub struct NodeQuadratic {
    pub g: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl NodeQuadratic {
    pub fn mse(&self, h: &DVector<f64>) -> f64 {
        h.dot(&(&self.g * h)) - 2.0 * self.b.dot(h) + self.c
    }

    pub fn grad(&self, h: &DVector<f64>) -> DVector<f64> {
        (&self.g * h - &self.b) * 2.0
    }

    /// Nesterov-accelerated gradient descent from zero.
    pub fn descend(&self, iters: usize) -> DVector<f64> {
        let l = 2.0 * nalgebra::SymmetricEigen::new(self.g.clone()).eigenvalues.amax();
        let step = if l > 0.0 { 1.0 / l } else { 0.0 };
        let mut h = DVector::zeros(self.b.len());
        let mut prev = h.clone();
        for t in 0..iters {
            let y = &h + (&h - &prev) * (t as f64 / (t as f64 + 3.0));
            prev = h;
            h = &y - self.grad(&y) * step;
        }
        h
    }
}

pub fn node_quadratics(
    s: &DMatrix<f64>,
    inputs: &[DVector<f64>],
    targets: &[DVector<f64>],
    order: usize,
) -> Vec<NodeQuadratic> {
    let n = s.nrows();
    let count = inputs.len();
    let mean = |v: &[DVector<f64>]| v.iter().fold(DVector::zeros(n), |a, x| a + x) / count as f64;
    let (mx, mr) = (mean(inputs), mean(targets));
    let denom = (count - 1) as f64;
    let mut out: Vec<NodeQuadratic> = (0..n)
        .map(|_| NodeQuadratic {
            g: DMatrix::zeros(order + 1, order + 1),
            b: DVector::zeros(order + 1),
            c: 0.0,
        })
        .collect();
    for (x, r) in inputs.iter().zip(targets) {
        let mut shifted = vec![x - &mx];
        for k in 1..=order {
            shifted.push(s * &shifted[k - 1]);
        }
        let e = r - &mr;
        for (i, q) in out.iter_mut().enumerate() {
            let z = DVector::from_fn(order + 1, |k, _| shifted[k][i]);
            q.g += &z * z.transpose() / denom;
            q.b += &z * (e[i] / denom);
            q.c += e[i] * e[i] / denom;
        }
    }
    out
}
